#pragma once

#include "boardcast/common.hpp"
#include "boardcast/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace boardcast {

/// The paper's AUC vocabulary: below .70, acceptable [.70,.80),
/// good [.80,.90), excellent [.90, 1].
enum class AucBand { below, acceptable, good, excellent };

std::string to_string(AucBand band);

struct AucResult {
  std::optional<Scalar> auc;  // empty when only one class is present
  int n_pos = 0;
  int n_neg = 0;

  std::optional<AucBand> band() const;
};

/// Mann-Whitney AUC with half credit for ties, computed in O(n log n) via
/// midranks. A single-class label vector yields an undefined result with
/// the counts reported, never a silent zero.
AucResult auc(const std::vector<Scalar>& scores, const std::vector<int>& labels);

AucBand band(Scalar auc_value);

/// For each threshold, the proportion of days whose breach fraction is at
/// least that threshold (Figure-1-style distribution).
std::vector<Scalar> breach_distribution(const DailyBoardingSeries& series,
                                        const std::vector<Scalar>& thresholds);

}  // namespace boardcast
