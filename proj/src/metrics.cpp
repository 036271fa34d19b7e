#include "boardcast/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace boardcast {

std::string to_string(AucBand band) {
  switch (band) {
    case AucBand::below: return "below";
    case AucBand::acceptable: return "acceptable";
    case AucBand::good: return "good";
    case AucBand::excellent: return "excellent";
  }
  return "?";
}

std::optional<AucBand> AucResult::band() const {
  if (!auc) return std::nullopt;
  return boardcast::band(*auc);
}

AucBand band(Scalar auc_value) {
  if (auc_value < 0.70) return AucBand::below;
  if (auc_value < 0.80) return AucBand::acceptable;
  if (auc_value < 0.90) return AucBand::good;
  return AucBand::excellent;
}

AucResult auc(const std::vector<Scalar>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  AucResult result;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("auc: labels must be 0 or 1");
    (y == 1 ? result.n_pos : result.n_neg)++;
  }
  if (result.n_pos == 0 || result.n_neg == 0) return result;

  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups; the rank sum of positives then counts ordered
  // pairs with half credit for ties, exactly.
  Scalar pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const Scalar midrank = 0.5 * static_cast<Scalar>(i + 1 + j);  // average of i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += midrank;
    }
    i = j;
  }

  const Scalar n_pos = static_cast<Scalar>(result.n_pos);
  const Scalar n_neg = static_cast<Scalar>(result.n_neg);
  const Scalar u = pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
  result.auc = u / (n_pos * n_neg);
  return result;
}

std::vector<Scalar> breach_distribution(const DailyBoardingSeries& series,
                                        const std::vector<Scalar>& thresholds) {
  if (series.empty()) throw DataError("breach_distribution: empty boarding series");
  std::vector<Scalar> out;
  out.reserve(thresholds.size());
  for (Scalar t : thresholds) {
    long hits = 0;
    for (const auto& [date, fraction] : series) {
      (void)date;
      if (fraction >= t) ++hits;
    }
    out.push_back(static_cast<Scalar>(hits) / static_cast<Scalar>(series.size()));
  }
  return out;
}

}  // namespace boardcast
