// Copyright 2026 The SegAlign Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "segalign/contrastive.hpp"
#include "segalign/error.hpp"
#include "segalign/image.hpp"
#include "segalign/losses.hpp"
#include "segalign/manifest.hpp"
#include "segalign/mask_filter.hpp"
#include "segalign/metrics.hpp"
#include "segalign/npy.hpp"
#include "segalign/pipeline.hpp"
#include "segalign/png_io.hpp"
#include "segalign/prompts.hpp"
#include "segalign/prototypes.hpp"
#include "segalign/pseudo_label.hpp"
#include "segalign/rle.hpp"
#include "segalign/seeds.hpp"
#include "segalign/tensor.hpp"
