#include "encommons/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "encommons/kernels/aes128.hpp"
#include "encommons/kernels/scan.hpp"

namespace en::core {

namespace {

// Domain-separation label for identifier derivation; fills the block up to
// the 4 interval bytes.
constexpr std::uint8_t kRpiLabel[12] = {'E', 'N', '-', 'R', 'P', 'I',
                                        0,   0,   0,   0,   0,   0};

void fill_rpi_block(std::uint32_t interval, std::uint8_t block[16]) {
  std::memcpy(block, kRpiLabel, 12);
  block[12] = static_cast<std::uint8_t>(interval);
  block[13] = static_cast<std::uint8_t>(interval >> 8);
  block[14] = static_cast<std::uint8_t>(interval >> 16);
  block[15] = static_cast<std::uint8_t>(interval >> 24);
}

void require_valid_tek(const TemporaryExposureKey& tek) {
  if (!tek.day_start.is_day_start())
    throw std::invalid_argument("unaligned day start");
  if (tek.rolling_period < 1 || tek.rolling_period > kIntervalsPerDay)
    throw std::invalid_argument("rolling period out of range");
}

std::string sort_key_pha(const DiagnosisKey& key) {
  return key.pha_id.value_or(std::string());
}

}  // namespace

IntervalNumber interval_from_timestamp(std::uint64_t unix_seconds) {
  std::uint64_t v = unix_seconds / kIntervalSeconds;
  if (v > 0xffffffffull)
    throw std::out_of_range("timestamp beyond interval range");
  return {static_cast<std::uint32_t>(v)};
}

TemporaryExposureKey generate_tek(Rng& entropy, IntervalNumber day_start) {
  if (!day_start.is_day_start())
    throw std::invalid_argument("unaligned day start");
  TemporaryExposureKey tek;
  tek.key_material = entropy.next_bytes16();
  tek.day_start = day_start;
  tek.rolling_period = kIntervalsPerDay;
  return tek;
}

RollingProximityIdentifier derive_rpi(const TemporaryExposureKey& tek,
                                      IntervalNumber interval) {
  require_valid_tek(tek);
  if (interval.value < tek.day_start.value ||
      interval.value >= tek.day_start.value + tek.rolling_period)
    throw std::out_of_range("interval outside TEK rolling period");

  std::uint8_t block[16];
  fill_rpi_block(interval.value, block);
  kern::Aes128Key ks = kern::aes128_expand(tek.key_material.data());
  RollingProximityIdentifier rpi;
  kern::aes128_active().encrypt(ks, block, rpi.bytes.data());
  return rpi;
}

std::vector<RollingProximityIdentifier> derive_rpi_sequence(
    const TemporaryExposureKey& tek) {
  require_valid_tek(tek);
  const std::size_t n = tek.rolling_period;
  std::vector<std::uint8_t> blocks(16 * n);
  for (std::size_t j = 0; j < n; ++j) {
    fill_rpi_block(tek.day_start.value + static_cast<std::uint32_t>(j),
                   blocks.data() + 16 * j);
  }
  std::vector<std::uint8_t> out(16 * n);
  kern::Aes128Key ks = kern::aes128_expand(tek.key_material.data());
  kern::aes128_active().encrypt_batch(ks, blocks.data(), out.data(), n);

  std::vector<RollingProximityIdentifier> seq(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::memcpy(seq[j].bytes.data(), out.data() + 16 * j, 16);
  }
  return seq;
}

std::string_view to_string(ReportType t) {
  return t == ReportType::kConfirmed ? "confirmed" : "probable";
}

std::optional<ReportType> report_type_from_string(std::string_view s) {
  if (s == "confirmed") return ReportType::kConfirmed;
  if (s == "probable") return ReportType::kProbable;
  return std::nullopt;
}

void validate(const ExposurePolicy& policy) {
  if (!(policy.min_total_duration_s >= 0))
    throw std::invalid_argument("negative minimum duration");
  if (!std::isfinite(policy.max_attenuation_db))
    throw std::invalid_argument("non-finite attenuation limit");
  if (!(policy.weight_confirmed > 0) || !(policy.weight_probable > 0))
    throw std::invalid_argument("non-positive report weight");
  if (policy.weight_probable > policy.weight_confirmed)
    throw std::invalid_argument("probable weight exceeds confirmed weight");
}

double report_weight(const ExposurePolicy& policy, ReportType t) {
  return t == ReportType::kConfirmed ? policy.weight_confirmed
                                     : policy.weight_probable;
}

std::array<std::uint8_t, 8> policy_digest(const ExposurePolicy& policy) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.17g|%.17g|%.17g|%.17g",
                policy.max_attenuation_db, policy.min_total_duration_s,
                policy.weight_confirmed, policy.weight_probable);
  std::uint64_t h = fnv1a64(buf);
  std::array<std::uint8_t, 8> out;
  for (int i = 0; i < 8; ++i)
    out[i] = static_cast<std::uint8_t>(h >> (56 - 8 * i));
  return out;
}

std::vector<ExposureMatch> match_exposures(
    const std::vector<DiagnosisKey>& keys,
    const std::vector<ObservedBeacon>& log, const ExposurePolicy& policy) {
  validate(policy);

  // Beacons bucketed by interval, attenuation-filtered up front. Identifier
  // bytes are packed densely so the 16-byte scan kernel can run over them.
  struct Bucket {
    std::vector<std::uint8_t> rpis;
    std::vector<std::size_t> log_index;
  };
  std::unordered_map<std::uint32_t, Bucket> buckets;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const ObservedBeacon& b = log[i];
    if (!std::isfinite(b.attenuation_db) || b.attenuation_db < 0)
      throw std::invalid_argument("bad beacon attenuation");
    if (!(b.duration_s >= 0) || b.duration_s > kIntervalSeconds)
      throw std::invalid_argument("bad beacon duration");
    if (b.attenuation_db > policy.max_attenuation_db) continue;
    Bucket& bucket = buckets[b.interval.value];
    bucket.rpis.insert(bucket.rpis.end(), b.rpi.bytes.begin(),
                       b.rpi.bytes.end());
    bucket.log_index.push_back(i);
  }

  std::vector<ExposureMatch> matches;
  for (const DiagnosisKey& key : keys) {
    std::vector<RollingProximityIdentifier> seq = derive_rpi_sequence(key.tek);

    std::vector<std::size_t> hits;
    for (std::uint32_t j = 0; j < key.tek.rolling_period; ++j) {
      auto it = buckets.find(key.tek.day_start.value + j);
      if (it == buckets.end()) continue;
      const Bucket& bucket = it->second;
      const std::size_t n = bucket.log_index.size();
      std::size_t pos = kern::find_u128(bucket.rpis.data(), n,
                                        seq[j].bytes.data(), 0);
      while (pos < n) {
        hits.push_back(bucket.log_index[pos]);
        pos = kern::find_u128(bucket.rpis.data(), n, seq[j].bytes.data(),
                              pos + 1);
      }
    }
    if (hits.empty()) continue;

    ExposureMatch m;
    m.key = key;
    m.min_attenuation_db = log[hits.front()].attenuation_db;
    for (std::size_t i : hits) {
      m.total_duration_s += log[i].duration_s;
      m.min_attenuation_db = std::min(m.min_attenuation_db,
                                      log[i].attenuation_db);
      m.matched_intervals.push_back(log[i].interval);
    }
    std::sort(m.matched_intervals.begin(), m.matched_intervals.end());
    m.matched_intervals.erase(
        std::unique(m.matched_intervals.begin(), m.matched_intervals.end()),
        m.matched_intervals.end());
    if (m.total_duration_s >= policy.min_total_duration_s &&
        m.total_duration_s > 0) {
      matches.push_back(std::move(m));
    }
  }

  std::stable_sort(matches.begin(), matches.end(),
                   [](const ExposureMatch& a, const ExposureMatch& b) {
                     if (a.key.tek.day_start != b.key.tek.day_start)
                       return a.key.tek.day_start < b.key.tek.day_start;
                     return sort_key_pha(a.key) < sort_key_pha(b.key);
                   });
  return matches;
}

RiskScore score_risk(const std::vector<ExposureMatch>& matches,
                     const ExposurePolicy& policy) {
  validate(policy);
  RiskScore score;
  for (const ExposureMatch& m : matches) {
    score.value += m.total_duration_s * report_weight(policy, m.key.report_type);
  }
  return score;
}

DailyLoadEstimate estimate_daily_load(std::uint64_t diagnoses_per_day,
                                      std::uint64_t teks_per_diagnosis,
                                      std::uint64_t bytes_per_tek,
                                      double overhead_factor) {
  if (!(overhead_factor >= 0) || !std::isfinite(overhead_factor))
    throw std::invalid_argument("overhead factor must be non-negative");
  DailyLoadEstimate estimate;
  estimate.raw_bytes_per_day =
      diagnoses_per_day * teks_per_diagnosis * bytes_per_tek;
  estimate.reported_bytes_per_day =
      static_cast<double>(estimate.raw_bytes_per_day) * overhead_factor;
  estimate.rpi_derivations_per_day =
      diagnoses_per_day * teks_per_diagnosis * kIntervalsPerDay;
  return estimate;
}

std::vector<RpiTestVector> read_rpi_vectors(std::istream& in) {
  std::vector<RpiTestVector> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    RpiTestVector v;
    char tek_hex[33] = {0};
    char rpi_hex[33] = {0};
    if (std::sscanf(line.c_str(), "%32[0-9a-fA-F],%u,%u,%32[0-9a-fA-F]",
                    tek_hex, &v.day_start, &v.interval, rpi_hex) != 4)
      throw std::invalid_argument("malformed test-vector line: " + line);
    v.tek = bytes16_from_hex(tek_hex);
    v.rpi = bytes16_from_hex(rpi_hex);
    out.push_back(v);
  }
  return out;
}

void write_rpi_vectors(std::ostream& out,
                       const std::vector<RpiTestVector>& vectors) {
  for (const RpiTestVector& v : vectors) {
    out << to_hex(v.tek) << ',' << v.day_start << ',' << v.interval << ','
        << to_hex(v.rpi) << '\n';
  }
}

}  // namespace en::core
