// spkv/spkv.hpp

// Copyright 2026 The spkv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "spkv/common.hpp"
#include "spkv/config.hpp"
#include "spkv/embedspace.hpp"
#include "spkv/eval.hpp"
#include "spkv/frontend.hpp"
#include "spkv/gmm.hpp"
#include "spkv/io.hpp"
#include "spkv/ivector.hpp"
#include "spkv/manifest.hpp"
#include "spkv/pipeline.hpp"
#include "spkv/plda.hpp"
#include "spkv/synthkit.hpp"
