#include "boardcast/dataset.hpp"

#include "boardcast/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace boardcast {

namespace {

constexpr int kMinHoursPerDay = 20;

long parse_long(const std::string& s, const std::string& what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("cannot parse " + what + " from '" + s + "'");
  }
  return v;
}

double parse_real(const std::string& s, const std::string& what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("cannot parse " + what + " from '" + s + "'");
  }
  return v;
}

void require_columns(const csv::Table& t, const std::vector<std::string>& names,
                     const std::string& origin) {
  for (const auto& n : names) {
    if (t.column(n) < 0) {
      throw DataError(origin + ": missing required column '" + n + "'");
    }
  }
}

}  // namespace

std::vector<PeriodSpec> canonical_periods() {
  return {
      {"pre-covid", Date::from_ymd(2018, 12, 31), Date::from_ymd(2020, 1, 22)},
      {"waves-1-4", Date::from_ymd(2020, 1, 23), Date::from_ymd(2021, 5, 21)},
      {"between-4-and-5", Date::from_ymd(2021, 5, 22), Date::from_ymd(2021, 12, 23)},
      {"wave-5", Date::from_ymd(2021, 12, 24), Date::from_ymd(2022, 7, 23)},
  };
}

std::string to_string(SocioLevel level) {
  switch (level) {
    case SocioLevel::building: return "building";
    case SocioLevel::estate: return "estate";
    case SocioLevel::tpu: return "tpu";
  }
  return "?";
}

SocioLevel socio_level_from_string(const std::string& name) {
  if (name == "building") return SocioLevel::building;
  if (name == "estate") return SocioLevel::estate;
  if (name == "tpu") return SocioLevel::tpu;
  throw DataError("unknown socioecological level '" + name +
                  "' (expected building, estate, or tpu)");
}

std::string to_string(LabelRule::Mode mode) {
  return mode == LabelRule::Mode::point ? "point" : "any_in_horizon";
}

StaticProfile::StaticProfile(std::vector<StaticFeature> features)
    : features_(std::move(features)) {
  std::set<std::string> names;
  for (auto& f : features_) {
    if (!names.insert(f.name).second) {
      throw DataError("duplicate static feature name '" + f.name + "'");
    }
    if (f.encoding.empty()) {
      throw DataError("static feature '" + f.name + "' has an empty encoding");
    }
    if (f.categorical) {
      if (f.response_levels.size() != f.encoding.size()) {
        throw DataError("static feature '" + f.name +
                        "': response level count does not match encoding width");
      }
      // Keep slots in lexicographic response-level order so flattening is
      // independent of insertion order.
      std::vector<std::size_t> order(f.encoding.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return f.response_levels[a] < f.response_levels[b];
      });
      StaticFeature sorted = f;
      for (std::size_t i = 0; i < order.size(); ++i) {
        sorted.response_levels[i] = f.response_levels[order[i]];
        sorted.encoding[i] = f.encoding[order[i]];
      }
      f = std::move(sorted);

      Scalar sum = 0;
      for (Scalar v : f.encoding) {
        if (v != 0.0 && v != 1.0) {
          throw DataError("static feature '" + f.name +
                          "': one-hot slots must be exactly 0 or 1");
        }
        sum += v;
      }
      if (sum != 1.0) {
        throw DataError("static feature '" + f.name +
                        "': one-hot encoding must sum to exactly 1");
      }
    } else {
      if (f.encoding.size() != 1) {
        throw DataError("continuous static feature '" + f.name +
                        "' must hold exactly one scalar");
      }
      if (!(f.encoding[0] >= 0.0 && f.encoding[0] <= 1.0)) {
        throw DataError("continuous static feature '" + f.name +
                        "' must be normalized to [0,1], got " +
                        format_double(f.encoding[0]));
      }
    }
  }
  std::stable_sort(features_.begin(), features_.end(),
                   [](const StaticFeature& a, const StaticFeature& b) {
                     if (a.level != b.level) return a.level < b.level;
                     return a.name < b.name;
                   });
}

int StaticProfile::flattened_length() const {
  int total = 0;
  for (const auto& f : features_) total += f.width();
  return total;
}

Vector StaticProfile::flatten() const {
  Vector out(flattened_length());
  Eigen::Index i = 0;
  for (const auto& f : features_) {
    for (Scalar v : f.encoding) out[i++] = v;
  }
  return out;
}

std::vector<int> StaticProfile::level_widths() const {
  std::vector<int> widths(3, 0);
  for (const auto& f : features_) {
    widths[static_cast<int>(f.level)] += f.width();
  }
  return widths;
}

std::vector<std::string> StaticProfile::slot_names() const {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(flattened_length()));
  for (const auto& f : features_) {
    if (f.categorical) {
      for (const auto& rl : f.response_levels) names.push_back(f.name + "=" + rl);
    } else {
      names.push_back(f.name);
    }
  }
  return names;
}

DailyBoardingSeries compute_daily_breach_fraction(
    const std::vector<HourlyWaitRecord>& records, std::vector<SkipRecord>* skips) {
  std::map<Date, std::pair<int, int>> per_day;  // present, breached
  std::set<std::pair<std::int32_t, int>> seen;
  for (const auto& rec : records) {
    if (rec.hour < 0 || rec.hour > 23) {
      throw DataError("hour out of range at " + rec.date.to_string() + ": " +
                      std::to_string(rec.hour));
    }
    if (!seen.insert({rec.date.day_number(), rec.hour}).second) {
      throw DataError("duplicate hourly record for (" + rec.date.to_string() + ", " +
                      std::to_string(rec.hour) + ")");
    }
    auto& [present, breached] = per_day[rec.date];
    ++present;
    if (rec.breached) ++breached;
  }

  DailyBoardingSeries series;
  for (const auto& [date, counts] : per_day) {
    const auto [present, breached] = counts;
    if (present < kMinHoursPerDay) {
      if (skips) {
        skips->push_back({"daily_fraction", date.to_string(),
                          "incomplete_day_" + std::to_string(present) + "_of_24_hours"});
      }
      continue;
    }
    series[date] = static_cast<Scalar>(breached) / static_cast<Scalar>(present);
  }
  return series;
}

namespace {

std::vector<Date> label_dates(const LabelRule& rule, Date anchor) {
  std::vector<Date> dates;
  if (rule.mode == LabelRule::Mode::point) {
    dates.push_back(anchor + rule.horizon);
  } else {
    for (int d = 1; d <= rule.horizon; ++d) dates.push_back(anchor + d);
  }
  return dates;
}

}  // namespace

int binarize(const DailyBoardingSeries& series, const LabelRule& rule, Date anchor) {
  Scalar peak = -1.0;
  for (Date d : label_dates(rule, anchor)) {
    auto it = series.find(d);
    if (it == series.end()) {
      throw DataError("label date " + d.to_string() + " missing from boarding series");
    }
    peak = std::max(peak, it->second);
  }
  return peak >= rule.cutoff ? 1 : 0;
}

std::vector<WindowSample> build_windows(const DailyBoardingSeries& boarding,
                                        const CaseCountSeries* cases,
                                        const StaticProfile* profile, int input_length,
                                        const LabelRule& rule,
                                        std::vector<SkipRecord>* skips) {
  if (input_length < 1) throw ConfigError("input_length must be >= 1");
  if (rule.horizon < 1) throw ConfigError("label horizon must be >= 1");
  if (!(rule.cutoff > 0.0 && rule.cutoff < 1.0)) {
    throw ConfigError("label cutoff must lie strictly inside (0, 1)");
  }
  const int needed = input_length + rule.horizon;
  if (static_cast<int>(boarding.size()) < needed) {
    throw DataError("insufficient history: need at least " + std::to_string(needed) +
                    " days (input " + std::to_string(input_length) + " + horizon " +
                    std::to_string(rule.horizon) + "), got " +
                    std::to_string(boarding.size()));
  }

  const Vector static_vec = profile ? profile->flatten() : Vector(0);
  const int channels = cases ? 2 : 1;

  std::vector<WindowSample> samples;
  for (const auto& [anchor, unused] : boarding) {
    (void)unused;
    // Full input window present?
    bool complete = true;
    for (int i = 0; i < input_length; ++i) {
      const Date d = anchor - (input_length - 1 - i);
      if (!boarding.count(d) || (cases && !cases->count(d))) {
        complete = false;
        break;
      }
    }
    if (!complete) continue;

    bool labels_present = true;
    for (Date d : label_dates(rule, anchor)) {
      if (!boarding.count(d)) {
        labels_present = false;
        if (skips) {
          skips->push_back({"binarize", anchor.to_string(),
                            "missing_label_date_" + d.to_string()});
        }
        break;
      }
    }
    if (!labels_present) continue;

    WindowSample s;
    s.anchor_date = anchor;
    s.temporal.resize(input_length, channels);
    for (int i = 0; i < input_length; ++i) {
      const Date d = anchor - (input_length - 1 - i);
      s.temporal(i, 0) = boarding.at(d);
      if (cases) s.temporal(i, 1) = static_cast<Scalar>(cases->at(d));
    }
    s.static_vec = static_vec;
    s.label = binarize(boarding, rule, anchor);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::map<std::string, std::vector<WindowSample>> split_by_period(
    const std::vector<WindowSample>& samples, const std::vector<PeriodSpec>& periods,
    const LabelRule& rule, std::vector<SkipRecord>* skips) {
  for (const auto& p : periods) {
    if (p.start > p.end) {
      throw ConfigError("period '" + p.name + "' has start after end");
    }
  }
  for (std::size_t i = 0; i < periods.size(); ++i) {
    for (std::size_t j = i + 1; j < periods.size(); ++j) {
      if (periods[i].start <= periods[j].end && periods[j].start <= periods[i].end) {
        throw ConfigError("periods '" + periods[i].name + "' and '" + periods[j].name +
                          "' overlap");
      }
    }
  }

  std::map<std::string, std::vector<WindowSample>> buckets;
  for (const auto& p : periods) buckets[p.name];  // keep empty periods visible

  for (const auto& s : samples) {
    const PeriodSpec* home = nullptr;
    for (const auto& p : periods) {
      if (s.anchor_date >= p.start && s.anchor_date <= p.end) {
        home = &p;
        break;
      }
    }
    if (!home) {
      if (skips) {
        skips->push_back({"split", s.anchor_date.to_string(), "anchor_outside_all_periods"});
      }
      continue;
    }
    bool crosses = false;
    for (Date d : label_dates(rule, s.anchor_date)) {
      if (d < home->start || d > home->end) {
        crosses = true;
        break;
      }
    }
    if (crosses) {
      if (skips) {
        skips->push_back({"split", s.anchor_date.to_string(),
                          "label_crosses_boundary_of_" + home->name});
      }
      continue;
    }
    buckets[home->name].push_back(s);
  }
  return buckets;
}

ChannelNormalization normalize_channels(std::vector<WindowSample>& train,
                                        std::vector<std::vector<WindowSample>*> others) {
  if (train.empty()) throw DataError("cannot normalize: training split is empty");

  ChannelNormalization norm;
  if (train.front().temporal.cols() < 2) return norm;  // no case channel

  Scalar sum = 0, count = 0;
  for (const auto& s : train) {
    sum += s.temporal.col(1).sum();
    count += static_cast<Scalar>(s.temporal.rows());
  }
  const Scalar mean = sum / count;
  Scalar sq = 0;
  for (const auto& s : train) {
    sq += (s.temporal.col(1).array() - mean).square().sum();
  }
  const Scalar stddev = std::sqrt(sq / count);

  norm.applied = true;
  norm.mean = mean;
  norm.degenerate = (stddev == 0.0);
  norm.stddev = norm.degenerate ? 1.0 : stddev;

  auto apply = [&norm](std::vector<WindowSample>& split) {
    for (auto& s : split) {
      if (s.temporal.cols() < 2) continue;
      s.temporal.col(1) = (s.temporal.col(1).array() - norm.mean) / norm.stddev;
    }
  };
  apply(train);
  for (auto* split : others) {
    if (split) apply(*split);
  }
  return norm;
}

std::uint64_t fingerprint(const std::vector<WindowSample>& samples) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& s : samples) {
    const std::int32_t day = s.anchor_date.day_number();
    h = fnv1a64(&day, sizeof day, h);
    h = fnv1a64(&s.label, sizeof s.label, h);
    h = fnv1a64(s.temporal.data(),
                sizeof(Scalar) * static_cast<std::size_t>(s.temporal.size()), h);
    h = fnv1a64(s.static_vec.data(),
                sizeof(Scalar) * static_cast<std::size_t>(s.static_vec.size()), h);
  }
  return h;
}

std::vector<HourlyWaitRecord> read_waits_csv(const std::filesystem::path& path) {
  const auto t = csv::read_file(path);
  require_columns(t, {"date", "hour", "breached"}, path.filename().string());
  const int ic_date = t.column("date"), ic_hour = t.column("hour"),
            ic_breached = t.column("breached");
  std::vector<HourlyWaitRecord> records;
  records.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    HourlyWaitRecord rec;
    rec.date = Date::parse(row[ic_date]);
    rec.hour = static_cast<int>(parse_long(row[ic_hour], "hour"));
    const long b = parse_long(row[ic_breached], "breached flag");
    if (rec.hour < 0 || rec.hour > 23) {
      throw DataError("hour out of range in waits.csv: " + row[ic_hour]);
    }
    if (b != 0 && b != 1) {
      throw DataError("breached flag must be 0 or 1, got " + row[ic_breached]);
    }
    rec.breached = (b == 1);
    records.push_back(rec);
  }
  return records;
}

CaseCountSeries read_cases_csv(const std::filesystem::path& path) {
  const auto t = csv::read_file(path);
  require_columns(t, {"date", "count"}, path.filename().string());
  const int ic_date = t.column("date"), ic_count = t.column("count");
  CaseCountSeries series;
  for (const auto& row : t.rows) {
    const Date d = Date::parse(row[ic_date]);
    const long c = parse_long(row[ic_count], "case count");
    if (c < 0) throw DataError("negative case count on " + d.to_string());
    if (!series.emplace(d, c).second) {
      throw DataError("duplicate case-count date " + d.to_string());
    }
  }
  return series;
}

StaticProfile read_static_csv(const std::filesystem::path& path) {
  const auto t = csv::read_file(path);
  require_columns(t, {"feature", "level", "response_level", "value"},
                  path.filename().string());
  const int ic_f = t.column("feature"), ic_l = t.column("level"),
            ic_r = t.column("response_level"), ic_v = t.column("value");

  // Group rows per feature, preserving declared categorical slots.
  std::vector<StaticFeature> features;
  std::map<std::string, std::size_t> index;
  for (const auto& row : t.rows) {
    const std::string& name = row[ic_f];
    const SocioLevel level = socio_level_from_string(row[ic_l]);
    const std::string& response = row[ic_r];
    const double value = parse_real(row[ic_v], "static value");

    auto it = index.find(name);
    if (it == index.end()) {
      StaticFeature f;
      f.name = name;
      f.level = level;
      f.categorical = !response.empty();
      index.emplace(name, features.size());
      features.push_back(std::move(f));
      it = index.find(name);
    }
    StaticFeature& f = features[it->second];
    if (f.level != level) {
      throw DataError("static feature '" + name + "' listed at two levels");
    }
    if (f.categorical != !response.empty()) {
      throw DataError("static feature '" + name +
                      "' mixes categorical and continuous rows");
    }
    if (f.categorical) {
      if (std::find(f.response_levels.begin(), f.response_levels.end(), response) !=
          f.response_levels.end()) {
        throw DataError("static feature '" + name + "' repeats response level '" +
                        response + "'");
      }
      f.response_levels.push_back(response);
      f.encoding.push_back(value);
    } else {
      if (!f.encoding.empty()) {
        throw DataError("continuous static feature '" + name + "' has multiple rows");
      }
      f.encoding.push_back(value);
    }
  }
  return StaticProfile(std::move(features));
}

std::vector<PeriodSpec> read_periods_csv(const std::filesystem::path& path) {
  const auto t = csv::read_file(path);
  require_columns(t, {"name", "start", "end"}, path.filename().string());
  const int ic_n = t.column("name"), ic_s = t.column("start"), ic_e = t.column("end");
  std::vector<PeriodSpec> periods;
  for (const auto& row : t.rows) {
    periods.push_back({row[ic_n], Date::parse(row[ic_s]), Date::parse(row[ic_e])});
  }
  return periods;
}

void write_skip_report(const std::vector<SkipRecord>& skips,
                       const std::filesystem::path& path) {
  csv::Writer w({"stage", "key", "reason"});
  for (const auto& s : skips) w.add_row({s.stage, s.key, s.reason});
  w.write_file(path);
}

}  // namespace boardcast
