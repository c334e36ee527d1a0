// Copyright 2026 The Partiscope Authors
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

#include <vector>

#include "partiscope/partitioning/partition_model.hpp"

namespace partiscope::partitioning {

void finalize_gmm(GmmParams& p, std::size_t d);
std::vector<int> gmm_assign(const GmmParams& p, const Features& x);
std::vector<int> kmeans_assign(const KMeansParams& p, const Features& x);

}  // namespace partiscope::partitioning
