#pragma once

#include "boardcast/common.hpp"
#include "boardcast/dates.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace boardcast {

/// One published hourly wait observation. `breached` means the published
/// wait exceeded the 4-hour benchmark for that hour.
struct HourlyWaitRecord {
  Date date;
  int hour = 0;  // 0..23
  bool breached = false;
};

/// Date-ordered fraction of hours per day breaching the 4-hour target.
using DailyBoardingSeries = std::map<Date, Scalar>;

/// Date-ordered district-level daily confirmed case counts.
using CaseCountSeries = std::map<Date, long>;

/// Named, inclusive date range used to partition the study window.
struct PeriodSpec {
  std::string name;
  Date start;
  Date end;
};

/// The pandemic-phase boundaries the study uses.
std::vector<PeriodSpec> canonical_periods();

enum class SocioLevel { building = 0, estate = 1, tpu = 2 };

std::string to_string(SocioLevel level);
SocioLevel socio_level_from_string(const std::string& name);

/**
 * One time-invariant feature: either categorical (a one-hot vector over
 * its response levels) or continuous (a single value normalized to [0,1]).
 */
struct StaticFeature {
  std::string name;
  SocioLevel level = SocioLevel::building;
  bool categorical = false;
  std::vector<std::string> response_levels;  // empty for continuous
  std::vector<Scalar> encoding;              // one-hot slots, or one scalar

  int width() const { return static_cast<int>(encoding.size()); }
};

/**
 * The full time-invariant profile. Flattening is deterministic: levels in
 * building -> estate -> tpu order, features lexicographic by name within a
 * level, one-hot slots lexicographic by response level within a feature.
 */
class StaticProfile {
 public:
  StaticProfile() = default;
  explicit StaticProfile(std::vector<StaticFeature> features);

  const std::vector<StaticFeature>& features() const { return features_; }
  bool empty() const { return features_.empty(); }

  int flattened_length() const;
  Vector flatten() const;

  /// Per-level widths in level order (building, estate, tpu); zero when a
  /// level has no features.
  std::vector<int> level_widths() const;

  /// "feature=response_level" per one-hot slot, or the feature name for a
  /// continuous scalar, in flattening order.
  std::vector<std::string> slot_names() const;

 private:
  std::vector<StaticFeature> features_;  // kept in flattening order
};

/// Forecast supervision rule: horizon in days, breach-fraction cutoff, and
/// whether the outcome is the single day at the horizon or any day within it.
struct LabelRule {
  enum class Mode { point, any_in_horizon };

  int horizon = 14;
  Scalar cutoff = 0.708;
  Mode mode = Mode::point;
};

std::string to_string(LabelRule::Mode mode);

/// One supervision unit: a 7-day (by default) temporal window, the
/// time-invariant vector, and a binary outcome.
struct WindowSample {
  Matrix temporal;     // input_length x channels; col 0 breach fraction, col 1 cases
  Vector static_vec;   // empty when no static profile is in play
  int label = 0;
  Date anchor_date;    // last date covered by the input window
};

/// One dropped or skipped unit of data, for the skip report.
struct SkipRecord {
  std::string stage;
  std::string key;
  std::string reason;
};

/// Daily breach fractions from hourly records. Days with fewer than 20 of
/// 24 published hours are excluded (recorded in `skips`) rather than
/// imputed. Duplicate (date, hour) keys are rejected.
DailyBoardingSeries compute_daily_breach_fraction(
    const std::vector<HourlyWaitRecord>& records,
    std::vector<SkipRecord>* skips = nullptr);

/// Binary outcome for one anchor. Comparison against the cutoff is
/// inclusive (>=). Throws DataError if a required date is absent.
int binarize(const DailyBoardingSeries& series, const LabelRule& rule, Date anchor);

/// Rolling-window samples over a boarding series, with an optional case
/// channel and optional static profile. One sample per anchor where the
/// full input window and every label date exist.
std::vector<WindowSample> build_windows(const DailyBoardingSeries& boarding,
                                        const CaseCountSeries* cases,
                                        const StaticProfile* profile,
                                        int input_length, const LabelRule& rule,
                                        std::vector<SkipRecord>* skips = nullptr);

/// Buckets samples by the period containing their anchor date. Samples
/// whose label dates cross out of the anchor's period are dropped and
/// reported, as are samples anchored outside every period.
std::map<std::string, std::vector<WindowSample>> split_by_period(
    const std::vector<WindowSample>& samples, const std::vector<PeriodSpec>& periods,
    const LabelRule& rule, std::vector<SkipRecord>* skips = nullptr);

/// How the case-count channel was standardized, for the run manifest.
struct ChannelNormalization {
  bool applied = false;
  bool degenerate = false;  // zero variance: centered only
  Scalar mean = 0.0;
  Scalar stddev = 1.0;
};

/// Z-scores the case-count channel in place using training-split statistics
/// only. The breach-fraction channel is left untouched. A zero-variance
/// channel is centered only and flagged degenerate.
ChannelNormalization normalize_channels(std::vector<WindowSample>& train,
                                        std::vector<std::vector<WindowSample>*> others);

/// Content hash over sample tensors, labels, and anchors.
std::uint64_t fingerprint(const std::vector<WindowSample>& samples);

// CSV ingest (formats are fixed; see README).
std::vector<HourlyWaitRecord> read_waits_csv(const std::filesystem::path& path);
CaseCountSeries read_cases_csv(const std::filesystem::path& path);
StaticProfile read_static_csv(const std::filesystem::path& path);
std::vector<PeriodSpec> read_periods_csv(const std::filesystem::path& path);

void write_skip_report(const std::vector<SkipRecord>& skips,
                       const std::filesystem::path& path);

}  // namespace boardcast
