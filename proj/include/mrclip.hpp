// Copyright 2026 The MR-CLIP Desk Authors.
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

#include "mrclip/autograd.hpp"
#include "mrclip/contrastive_loss.hpp"
#include "mrclip/dataset.hpp"
#include "mrclip/dicom.hpp"
#include "mrclip/encoder.hpp"
#include "mrclip/error.hpp"
#include "mrclip/eval.hpp"
#include "mrclip/kmeans.hpp"
#include "mrclip/label_space.hpp"
#include "mrclip/manifest.hpp"
#include "mrclip/metadata.hpp"
#include "mrclip/optimizer.hpp"
#include "mrclip/prompt.hpp"
#include "mrclip/report.hpp"
#include "mrclip/synth.hpp"
#include "mrclip/tensor.hpp"
#include "mrclip/train.hpp"
#include "mrclip/util.hpp"
