#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "encommons/bytes.hpp"
#include "encommons/rng.hpp"

// Protocol mathematics: the key schedule, interval arithmetic, exposure
// matching, and risk scoring that every other component consumes.
namespace en::core {

inline constexpr std::uint32_t kIntervalSeconds = 900;
inline constexpr std::uint32_t kIntervalsPerDay = 96;
inline constexpr std::uint32_t kDefaultRetentionDays = 14;

/// Count of 15-minute windows elapsed since the Unix epoch.
struct IntervalNumber {
  std::uint32_t value = 0;

  friend auto operator<=>(const IntervalNumber&, const IntervalNumber&) = default;

  IntervalNumber day_start() const { return {value - value % kIntervalsPerDay}; }
  bool is_day_start() const { return value % kIntervalsPerDay == 0; }
};

IntervalNumber interval_from_timestamp(std::uint64_t unix_seconds);

/// The daily secret from which a day's identifiers derive.
struct TemporaryExposureKey {
  Bytes16 key_material{};
  IntervalNumber day_start{};
  std::uint32_t rolling_period = kIntervalsPerDay;

  friend bool operator==(const TemporaryExposureKey&,
                         const TemporaryExposureKey&) = default;
};

/// Fresh random TEK for the day starting at day_start (must be a multiple
/// of 96), rolling period one full day.
TemporaryExposureKey generate_tek(Rng& entropy, IntervalNumber day_start);

/// 16-byte unlinkable broadcast token, one per 15-minute interval.
struct RollingProximityIdentifier {
  Bytes16 bytes{};

  friend auto operator<=>(const RollingProximityIdentifier&,
                          const RollingProximityIdentifier&) = default;
};

// RPI derivation is AES-128 with the TEK as key over the block
// "EN-RPI" || six zero bytes || little-endian 32-bit interval. The cipher
// output is exactly the 16 identifier bytes, so an observer without the key
// learns nothing about the TEK and identifiers across intervals are
// unlinkable. data/golden_rpi_vectors.csv pins the derivation bit-exactly.
RollingProximityIdentifier derive_rpi(const TemporaryExposureKey& tek,
                                      IntervalNumber interval);

/// Element j is derive_rpi(tek, day_start + j); length == rolling_period.
std::vector<RollingProximityIdentifier> derive_rpi_sequence(
    const TemporaryExposureKey& tek);

enum class ReportType { kConfirmed, kProbable };

std::string_view to_string(ReportType);
std::optional<ReportType> report_type_from_string(std::string_view);

/// A published TEK plus report type, PHA provenance, and region tags.
/// Deliberately has no person-identifying fields and no location fields.
struct DiagnosisKey {
  TemporaryExposureKey tek;
  ReportType report_type = ReportType::kConfirmed;
  std::optional<std::string> pha_id;
  std::set<std::string> region_tags;
  IntervalNumber upload_time{};
};

/// One logged reception of a nearby identifier.
struct ObservedBeacon {
  RollingProximityIdentifier rpi;
  IntervalNumber interval{};
  double attenuation_db = 0;
  double duration_s = 0;
};

// Health-authority knobs that turn raw receptions into exposures. Weights
// let probable reports count less than confirmed ones.
struct ExposurePolicy {
  double max_attenuation_db = 73;
  double min_total_duration_s = 900;
  double weight_confirmed = 1.0;
  double weight_probable = 0.5;
};

void validate(const ExposurePolicy&);
double report_weight(const ExposurePolicy&, ReportType);

/// Stable 8-byte fingerprint identifying a policy in reports.
std::array<std::uint8_t, 8> policy_digest(const ExposurePolicy&);

struct ExposureMatch {
  DiagnosisKey key;
  std::vector<IntervalNumber> matched_intervals;  // sorted, unique
  double total_duration_s = 0;
  double min_attenuation_db = 0;
};

struct RiskScore {
  double value = 0;
};

// For each key, recreates its RPI sequence and collects log entries whose
// identifier equals the derived one for the same interval and whose
// attenuation passes the policy. A key becomes a match when the summed
// duration reaches policy.min_total_duration_s. Output is ordered by
// (day_start, pha_id).
std::vector<ExposureMatch> match_exposures(
    const std::vector<DiagnosisKey>& keys,
    const std::vector<ObservedBeacon>& log, const ExposurePolicy& policy);

/// Policy-weighted exposure-seconds over the matches.
RiskScore score_risk(const std::vector<ExposureMatch>& matches,
                     const ExposurePolicy& policy);

// Back-of-envelope daily load for a deployment: how many key bytes move and
// how many identifier derivations a full matching pass costs.
struct DailyLoadEstimate {
  std::uint64_t raw_bytes_per_day = 0;
  double reported_bytes_per_day = 0.0;  // raw × transport overhead factor
  std::uint64_t rpi_derivations_per_day = 0;
};

DailyLoadEstimate estimate_daily_load(std::uint64_t diagnoses_per_day,
                                      std::uint64_t teks_per_diagnosis,
                                      std::uint64_t bytes_per_tek = 16,
                                      double overhead_factor = 1.0);

// Golden test-vector file: one record per line,
// `tek_hex,day_start,interval,rpi_hex`, comma-separated, LF endings.
struct RpiTestVector {
  Bytes16 tek{};
  std::uint32_t day_start = 0;
  std::uint32_t interval = 0;
  Bytes16 rpi{};
};

std::vector<RpiTestVector> read_rpi_vectors(std::istream& in);
void write_rpi_vectors(std::ostream& out,
                       const std::vector<RpiTestVector>& vectors);

}  // namespace en::core
