#pragma once

// Leader-follower trajectory records, CSV ingestion, 10 Hz resampling and the
// car-following period filter.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cflab/error.hpp"

namespace cflab {

inline constexpr double kSampleInterval = 0.1;  // s, 10 Hz
inline constexpr double kDefaultLvLength = 5.0;  // m

struct TrajectorySample {
  double t = 0.0;               // s
  double fv_speed = 0.0;        // m/s
  double gap = 0.0;             // m, FV front bumper to LV rear bumper
  double lv_speed = 0.0;        // m/s
  std::int64_t lv_id = 0;       // radar target id, 0 = no target
  double lateral_offset = 0.0;  // m, signed

  bool operator==(const TrajectorySample&) const = default;
};

struct CarFollowingPeriod {
  std::string driver_id;
  std::string period_id;
  std::vector<TrajectorySample> samples;
  double lv_length = kDefaultLvLength;

  double t_start() const { return samples.empty() ? 0.0 : samples.front().t; }
  double duration() const {
    return samples.size() < 2 ? 0.0 : samples.back().t - samples.front().t;
  }
  std::int64_t lv_id() const { return samples.empty() ? 0 : samples.front().lv_id; }
};

struct DriverDataset {
  std::string driver_id;
  std::vector<CarFollowingPeriod> periods;

  void validate() const {
    std::set<std::string> ids;
    for (const auto& p : periods) {
      if (p.driver_id != driver_id) {
        throw InputError("period '" + p.period_id + "' belongs to driver '" + p.driver_id +
                         "', expected '" + driver_id + "'");
      }
      if (!ids.insert(p.period_id).second) {
        throw InputError("duplicate period id '" + p.period_id + "' for driver '" + driver_id + "'");
      }
    }
  }
};

struct ExtractionCriteria {
  double max_gap = 120.0;      // m, strict upper bound
  double max_lateral = 2.5;    // m, strict bound on |lateral_offset|
  double min_duration = 15.0;  // s, kept periods last strictly longer
  double max_dropout = 0.0;    // s, longest bridged run of violating samples

  void validate() const {
    if (!(max_gap > 0 && max_lateral > 0 && min_duration > 0 && max_dropout >= 0)) {
      throw InputError("extraction criteria must be positive (max_dropout >= 0)");
    }
  }
};

/// Samples plus the optional lead-vehicle length column of a trajectory file.
struct TrajectoryTable {
  std::vector<TrajectorySample> samples;
  std::optional<double> lv_length;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace detail

inline constexpr std::string_view kTrajectoryHeader =
    "t_s,fv_speed_mps,gap_m,lv_speed_mps,lv_id,lateral_m";

/// Parses the trajectory CSV schema. Errors carry the 1-based line number.
inline TrajectoryTable load_trajectory(std::istream& in) {
  TrajectoryTable table;
  std::string line;
  if (!std::getline(in, line)) return table;
  auto header = detail::trim(line);
  if (!header.empty() && static_cast<unsigned char>(header.front()) == 0xEF) {
    header.remove_prefix(std::min<std::size_t>(3, header.size()));  // UTF-8 BOM
  }
  bool with_length = false;
  if (header == std::string(kTrajectoryHeader) + ",lv_length_m") {
    with_length = true;
  } else if (header != kTrajectoryHeader) {
    throw InputError("line 1: unexpected header '" + std::string(header) + "'");
  }
  const std::size_t ncols = with_length ? 7 : 6;

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto row = detail::trim(line);
    if (row.empty()) continue;
    auto cols = detail::split_csv(row);
    auto fail = [&](const std::string& what) {
      throw InputError("line " + std::to_string(lineno) + ": " + what);
    };
    if (cols.size() != ncols) {
      fail("expected " + std::to_string(ncols) + " columns, got " + std::to_string(cols.size()));
    }
    TrajectorySample s;
    if (!detail::parse_number(cols[0], s.t) || !detail::parse_number(cols[1], s.fv_speed) ||
        !detail::parse_number(cols[2], s.gap) || !detail::parse_number(cols[3], s.lv_speed) ||
        !detail::parse_number(cols[4], s.lv_id) || !detail::parse_number(cols[5], s.lateral_offset)) {
      fail("malformed row '" + std::string(row) + "'");
    }
    if (!std::isfinite(s.t) || !std::isfinite(s.fv_speed) || !std::isfinite(s.gap) ||
        !std::isfinite(s.lv_speed) || !std::isfinite(s.lateral_offset)) {
      fail("non-finite value");
    }
    if (s.fv_speed < 0 || s.lv_speed < 0) fail("negative speed");
    if (!table.samples.empty() && !(s.t > table.samples.back().t)) fail("non-monotonic time");
    if (with_length) {
      double len = 0;
      if (!detail::parse_number(cols[6], len) || !(len > 0)) fail("invalid lv_length_m");
      if (!table.lv_length) table.lv_length = len;
    }
    table.samples.push_back(s);
  }
  return table;
}

inline void write_trajectory(std::ostream& out, std::span<const TrajectorySample> samples,
                             std::optional<double> lv_length = std::nullopt) {
  out << kTrajectoryHeader << (lv_length ? ",lv_length_m" : "") << '\n';
  char buf[64];
  auto num = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, p - buf);
  };
  for (const auto& s : samples) {
    num(s.t);
    out << ',';
    num(s.fv_speed);
    out << ',';
    num(s.gap);
    out << ',';
    num(s.lv_speed);
    out << ',' << s.lv_id << ',';
    num(s.lateral_offset);
    if (lv_length) {
      out << ',';
      num(*lv_length);
    }
    out << '\n';
  }
}

/// Linear resampling onto t_first + k * 0.1 s. Input points that already sit on
/// the grid (within 1 us) are copied verbatim; lv_id is taken from the nearest
/// earlier input sample.
inline std::vector<TrajectorySample> resample_10hz(std::span<const TrajectorySample> in) {
  if (in.size() < 2) throw InputError("resampling needs at least 2 samples");
  constexpr double kOnGrid = 1e-6;
  const double t0 = in.front().t;
  const double span = in.back().t - t0;
  const auto n = static_cast<std::size_t>(std::floor(span / kSampleInterval + kOnGrid)) + 1;

  std::vector<TrajectorySample> out;
  out.reserve(n);
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) * kSampleInterval;
    while (i + 1 < in.size() && in[i + 1].t <= t + kOnGrid) ++i;
    if (std::abs(in[i].t - t) <= kOnGrid || i + 1 == in.size()) {
      out.push_back(in[i]);
      continue;
    }
    const auto& a = in[i];
    const auto& b = in[i + 1];
    const double w = (t - a.t) / (b.t - a.t);
    auto lerp = [w](double x, double y) { return x + w * (y - x); };
    TrajectorySample s;
    s.t = t;
    s.fv_speed = lerp(a.fv_speed, b.fv_speed);
    s.gap = lerp(a.gap, b.gap);
    s.lv_speed = lerp(a.lv_speed, b.lv_speed);
    s.lateral_offset = lerp(a.lateral_offset, b.lateral_offset);
    s.lv_id = a.lv_id;
    out.push_back(s);
  }
  return out;
}

inline bool satisfies_criteria(const TrajectorySample& s, const ExtractionCriteria& c) {
  return s.lv_id > 0 && s.gap > 0 && s.gap < c.max_gap && std::abs(s.lateral_offset) < c.max_lateral;
}

/// Maximal runs of 10 Hz samples following one radar target within the gap
/// and lateral bounds, longer than min_duration. Violating stretches of at
/// most max_dropout seconds between two runs on the same target are bridged
/// by linear interpolation, so every returned sample satisfies the criteria.
inline std::vector<CarFollowingPeriod> extract_periods(std::span<const TrajectorySample> samples,
                                                       const ExtractionCriteria& criteria,
                                                       const std::string& driver_id = {},
                                                       double lv_length = kDefaultLvLength) {
  criteria.validate();
  constexpr double kEps = 1e-6;

  struct Run {
    std::size_t begin, end;  // [begin, end)
    std::int64_t lv_id;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < samples.size();) {
    if (!satisfies_criteria(samples[i], criteria)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < samples.size() && satisfies_criteria(samples[j], criteria) &&
           samples[j].lv_id == samples[i].lv_id) {
      ++j;
    }
    runs.push_back({i, j, samples[i].lv_id});
    i = j;
  }

  // Bridge short dropouts between runs on the same target.
  std::vector<Run> merged;
  for (const auto& r : runs) {
    if (!merged.empty() && criteria.max_dropout > 0) {
      auto& last = merged.back();
      const auto missing = r.begin - last.end;
      if (last.lv_id == r.lv_id && missing > 0 &&
          static_cast<double>(missing) * kSampleInterval <= criteria.max_dropout + kEps) {
        last.end = r.end;
        continue;
      }
    }
    merged.push_back(r);
  }

  std::vector<CarFollowingPeriod> out;
  for (const auto& r : merged) {
    const auto steps = static_cast<double>(r.end - r.begin - 1);
    if (!(steps * kSampleInterval > criteria.min_duration + kEps)) continue;
    CarFollowingPeriod p;
    p.driver_id = driver_id;
    p.lv_length = lv_length;
    p.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(r.begin),
                     samples.begin() + static_cast<std::ptrdiff_t>(r.end));
    // Fill bridged samples from their valid neighbours.
    for (std::size_t k = 0; k < p.samples.size();) {
      if (satisfies_criteria(p.samples[k], criteria) && p.samples[k].lv_id == r.lv_id) {
        ++k;
        continue;
      }
      std::size_t e = k;
      while (!(satisfies_criteria(p.samples[e], criteria) && p.samples[e].lv_id == r.lv_id)) ++e;
      const auto& a = p.samples[k - 1];
      const auto b = p.samples[e];
      for (std::size_t m = k; m < e; ++m) {
        const double w = static_cast<double>(m - k + 1) / static_cast<double>(e - k + 1);
        auto lerp = [w](double x, double y) { return x + w * (y - x); };
        auto& s = p.samples[m];
        s.fv_speed = lerp(a.fv_speed, b.fv_speed);
        s.gap = lerp(a.gap, b.gap);
        s.lv_speed = lerp(a.lv_speed, b.lv_speed);
        s.lateral_offset = lerp(a.lateral_offset, b.lateral_offset);
        s.lv_id = r.lv_id;
      }
      k = e;
    }
    std::ostringstream id;
    id << "p" << (out.size() + 1 < 10 ? "00" : out.size() + 1 < 100 ? "0" : "") << out.size() + 1;
    p.period_id = id.str();
    out.push_back(std::move(p));
  }
  return out;
}

/// Throws InputError when a period breaks any car-following invariant.
inline void validate_period(const CarFollowingPeriod& p, const ExtractionCriteria& c = {}) {
  auto fail = [&](const std::string& what) {
    throw InputError("period '" + p.period_id + "': " + what);
  };
  if (p.samples.size() < 2) fail("fewer than 2 samples");
  if (!(p.lv_length > 0)) fail("lv_length must be positive");
  for (std::size_t i = 0; i < p.samples.size(); ++i) {
    const auto& s = p.samples[i];
    if (!satisfies_criteria(s, c)) fail("sample " + std::to_string(i) + " violates criteria");
    if (s.lv_id != p.samples.front().lv_id) fail("lead vehicle id changes");
    if (s.fv_speed < 0 || s.lv_speed < 0) fail("negative speed");
    if (i > 0 && std::abs(s.t - p.samples[i - 1].t - kSampleInterval) > 1e-6) {
      fail("samples are not on a 0.1 s grid");
    }
  }
  if (!(p.duration() > c.min_duration + 1e-6)) fail("duration not above minimum");
}

}  // namespace cflab
