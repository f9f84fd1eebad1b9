/*
 * Copyright 2026 The tinyeval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Umbrella header.

#ifndef TINYEVAL_TINYEVAL_HPP_
#define TINYEVAL_TINYEVAL_HPP_

#include "tinyeval/anchors.hpp"
#include "tinyeval/common.hpp"
#include "tinyeval/corpus.hpp"
#include "tinyeval/estimators.hpp"
#include "tinyeval/harness.hpp"
#include "tinyeval/irt.hpp"

#endif  // TINYEVAL_TINYEVAL_HPP_
