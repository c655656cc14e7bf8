/*
 * Copyright 2026 The CREAM Authors.
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

#pragma once

#include "cream/numcore.hpp"
#include "cream/graph.hpp"
#include "cream/masks.hpp"
#include "cream/model.hpp"
#include "cream/data.hpp"
#include "cream/train.hpp"
#include "cream/interpret.hpp"
#include "cream/service.hpp"
#include "cream/cli.hpp"
