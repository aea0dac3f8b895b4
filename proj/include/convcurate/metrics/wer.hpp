// Copyright (c) 2026 The convcurate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <string>
#include <vector>

namespace convcurate::metrics {

struct WerBreakdown {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int ref_words = 0;
  double wer = 0.0;
  // Set when the reference is empty; wer is then the insertion count.
  bool empty_reference = false;

  int errors() const { return substitutions + deletions + insertions; }
};

// Unit-cost Levenshtein alignment over already-normalized tokens. The S/D/I
// split follows the backtrace preference substitution > deletion >
// insertion; the total is the edit distance.
inline WerBreakdown wer(const std::vector<std::string>& ref,
                        const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});

  WerBreakdown out;
  out.ref_words = static_cast<int>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  if (n == 0) {
    out.empty_reference = m > 0;
    out.wer = static_cast<double>(out.insertions);
  } else {
    out.wer = static_cast<double>(out.errors()) / static_cast<double>(n);
  }
  return out;
}

}  // namespace convcurate::metrics
