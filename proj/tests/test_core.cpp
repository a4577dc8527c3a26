#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "encommons/core.hpp"
#include "encommons/rng.hpp"

using namespace en;
using namespace en::core;

namespace {

// Straight-line reference matcher: no bucketing, no scan kernels. Derives
// every identifier of every key and walks the whole log per key.
std::vector<ExposureMatch> match_reference(const std::vector<DiagnosisKey>& keys,
                                           const std::vector<ObservedBeacon>& log,
                                           const ExposurePolicy& policy) {
  std::vector<ExposureMatch> out;
  for (const DiagnosisKey& key : keys) {
    std::vector<RollingProximityIdentifier> rpis = derive_rpi_sequence(key.tek);
    std::set<std::uint32_t> intervals;
    double total = 0;
    double min_att = std::numeric_limits<double>::infinity();
    for (const ObservedBeacon& b : log) {
      if (b.attenuation_db > policy.max_attenuation_db) continue;
      std::uint32_t first = key.tek.day_start.value;
      if (b.interval.value < first ||
          b.interval.value >= first + key.tek.rolling_period)
        continue;
      if (rpis[b.interval.value - first].bytes != b.rpi.bytes) continue;
      intervals.insert(b.interval.value);
      total += b.duration_s;
      min_att = std::min(min_att, b.attenuation_db);
    }
    if (intervals.empty() || total < policy.min_total_duration_s || total <= 0)
      continue;
    ExposureMatch m;
    m.key = key;
    for (std::uint32_t iv : intervals)
      m.matched_intervals.push_back(IntervalNumber{iv});
    m.total_duration_s = total;
    m.min_attenuation_db = min_att;
    out.push_back(std::move(m));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ExposureMatch& a, const ExposureMatch& b) {
                     if (a.key.tek.day_start != b.key.tek.day_start)
                       return a.key.tek.day_start < b.key.tek.day_start;
                     return a.key.pha_id.value_or("") <
                            b.key.pha_id.value_or("");
                   });
  return out;
}

bool matches_equal(const std::vector<ExposureMatch>& a,
                   const std::vector<ExposureMatch>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const ExposureMatch& x = a[i];
    const ExposureMatch& y = b[i];
    if (x.key.tek.key_material != y.key.tek.key_material) return false;
    if (x.key.tek.day_start != y.key.tek.day_start) return false;
    if (x.key.report_type != y.key.report_type) return false;
    if (x.key.pha_id != y.key.pha_id) return false;
    if (x.matched_intervals.size() != y.matched_intervals.size()) return false;
    for (std::size_t k = 0; k < x.matched_intervals.size(); ++k)
      if (x.matched_intervals[k] != y.matched_intervals[k]) return false;
    if (x.total_duration_s != y.total_duration_s) return false;
    if (x.min_attenuation_db != y.min_attenuation_db) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("golden identifier vectors are bit-exact") {
  std::ifstream in(ENCOMMONS_DATA_DIR "/golden_rpi_vectors.csv");
  REQUIRE(in.good());
  std::vector<RpiTestVector> vectors = read_rpi_vectors(in);
  REQUIRE(vectors.size() == 10);
  for (const RpiTestVector& v : vectors) {
    TemporaryExposureKey tek{v.tek, IntervalNumber{v.day_start},
                             kIntervalsPerDay};
    CHECK(derive_rpi(tek, IntervalNumber{v.interval}).bytes == v.rpi);
    // and through the batch path
    auto seq = derive_rpi_sequence(tek);
    CHECK(seq.at(v.interval - v.day_start).bytes == v.rpi);
  }
}

TEST_CASE("identifier schedule shape") {
  Rng rng(31);
  TemporaryExposureKey tek = generate_tek(rng, IntervalNumber{96});
  CHECK(tek.day_start.value == 96);
  CHECK(tek.rolling_period == 96);

  auto seq = derive_rpi_sequence(tek);
  REQUIRE(seq.size() == 96);
  for (std::uint32_t j = 0; j < 96; ++j)
    CHECK(seq[j].bytes == derive_rpi(tek, IntervalNumber{96 + j}).bytes);

  CHECK_THROWS_AS(derive_rpi(tek, IntervalNumber{95}), std::out_of_range);
  CHECK_THROWS_AS(derive_rpi(tek, IntervalNumber{192}), std::out_of_range);
  CHECK_THROWS_AS(generate_tek(rng, IntervalNumber{1}), std::invalid_argument);
}

TEST_CASE("interval arithmetic") {
  CHECK(interval_from_timestamp(0).value == 0);
  CHECK(interval_from_timestamp(899).value == 0);
  CHECK(interval_from_timestamp(900).value == 1);
  CHECK(interval_from_timestamp(86399).value == 95);
  CHECK(interval_from_timestamp(86400).value == 96);
  CHECK_THROWS_AS(interval_from_timestamp(900ull * 0x100000000ull),
                  std::out_of_range);

  CHECK(IntervalNumber{0}.is_day_start());
  CHECK(IntervalNumber{96}.is_day_start());
  CHECK_FALSE(IntervalNumber{95}.is_day_start());
  CHECK(IntervalNumber{100}.day_start().value == 96);
}

TEST_CASE("pooled identifier bytes look uniform") {
  // 64 keys × 96 identifiers × 16 bytes = 98304 samples over 256 bins.
  Rng rng(37);
  std::array<std::uint64_t, 256> counts{};
  std::size_t total = 0;
  for (int k = 0; k < 64; ++k) {
    TemporaryExposureKey tek = generate_tek(rng, IntervalNumber{0});
    for (const auto& rpi : derive_rpi_sequence(tek)) {
      for (std::uint8_t b : rpi.bytes) {
        counts[b] += 1;
        ++total;
      }
    }
  }
  const double expected = double(total) / 256.0;
  double chi2 = 0;
  for (std::uint64_t c : counts) {
    double d = double(c) - expected;
    chi2 += d * d / expected;
  }
  // 0.99 quantile of chi-square with 255 degrees of freedom.
  CHECK(chi2 < 310.45738821990585);
}

TEST_CASE("policy validation and digest") {
  ExposurePolicy policy;
  CHECK_NOTHROW(validate(policy));
  CHECK(to_hex(policy_digest(policy)) == "f0119023b0104fde");

  ExposurePolicy other = policy;
  other.max_attenuation_db = 60;
  CHECK(policy_digest(other) != policy_digest(policy));
  CHECK(policy_digest(policy) == policy_digest(ExposurePolicy{}));

  ExposurePolicy bad = policy;
  bad.weight_confirmed = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = policy;
  bad.weight_probable = 2 * bad.weight_confirmed;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = policy;
  bad.min_total_duration_s = -1;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = policy;
  bad.max_attenuation_db = std::nan("");
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  CHECK(report_weight(policy, ReportType::kConfirmed) == 1.0);
  CHECK(report_weight(policy, ReportType::kProbable) == 0.5);
}

TEST_CASE("report type names") {
  CHECK(to_string(ReportType::kConfirmed) == "confirmed");
  CHECK(to_string(ReportType::kProbable) == "probable");
  CHECK(report_type_from_string("confirmed") == ReportType::kConfirmed);
  CHECK(report_type_from_string("probable") == ReportType::kProbable);
  CHECK_FALSE(report_type_from_string("suspected").has_value());
}

TEST_CASE("matcher agrees with the straight-line reference") {
  Rng rng(41);
  for (int instance = 0; instance < 25; ++instance) {
    std::size_t n_keys = 1 + rng.next_below(20);
    std::vector<DiagnosisKey> keys;
    for (std::size_t i = 0; i < n_keys; ++i) {
      DiagnosisKey key;
      key.tek = generate_tek(
          rng, IntervalNumber{static_cast<std::uint32_t>(
                   96 * rng.next_below(4))});
      key.report_type =
          rng.bernoulli(0.5) ? ReportType::kConfirmed : ReportType::kProbable;
      if (rng.bernoulli(0.7))
        key.pha_id = "pha-" + std::to_string(rng.next_below(5));
      key.upload_time = IntervalNumber{500};
      keys.push_back(std::move(key));
    }

    std::vector<ObservedBeacon> log;
    std::size_t n_beacons = rng.next_below(400);
    for (std::size_t i = 0; i < n_beacons; ++i) {
      ObservedBeacon b;
      std::uint32_t interval = static_cast<std::uint32_t>(rng.next_below(384));
      if (rng.bernoulli(0.5)) {
        // true positive: an identifier actually derived from some key
        const DiagnosisKey& key = keys[rng.next_below(keys.size())];
        interval = key.tek.day_start.value +
                   static_cast<std::uint32_t>(rng.next_below(96));
        b.rpi = derive_rpi(key.tek, IntervalNumber{interval});
      } else {
        b.rpi = RollingProximityIdentifier{rng.next_bytes16()};
      }
      b.interval = IntervalNumber{interval};
      b.attenuation_db = 30 + 60 * rng.next_unit();
      b.duration_s = 60 * (1 + rng.next_below(15));
      log.push_back(b);
    }

    ExposurePolicy policy;
    policy.max_attenuation_db = 73;
    policy.min_total_duration_s = 60 * (1 + rng.next_below(20));

    auto got = match_exposures(keys, log, policy);
    auto want = match_reference(keys, log, policy);
    CHECK(matches_equal(got, want));
    CHECK(score_risk(got, policy).value == score_risk(want, policy).value);
  }
}

TEST_CASE("matcher output ordering and risk arithmetic") {
  Rng rng(43);
  DiagnosisKey early, late_a, late_b;
  early.tek = generate_tek(rng, IntervalNumber{0});
  early.report_type = ReportType::kProbable;
  early.pha_id = "zeta";
  late_a.tek = generate_tek(rng, IntervalNumber{96});
  late_a.report_type = ReportType::kConfirmed;
  late_a.pha_id = "alpha";
  late_b.tek = generate_tek(rng, IntervalNumber{96});
  late_b.report_type = ReportType::kConfirmed;
  late_b.pha_id = "beta";

  std::vector<ObservedBeacon> log;
  for (const DiagnosisKey& k : {late_b, early, late_a}) {
    ObservedBeacon b;
    b.interval = k.tek.day_start;
    b.rpi = derive_rpi(k.tek, b.interval);
    b.attenuation_db = 50;
    b.duration_s = 900;
    log.push_back(b);
  }

  ExposurePolicy policy;
  auto matches = match_exposures({late_b, late_a, early}, log, policy);
  REQUIRE(matches.size() == 3);
  CHECK(matches[0].key.pha_id == "zeta");   // earlier day wins
  CHECK(matches[1].key.pha_id == "alpha");  // then lexicographic authority
  CHECK(matches[2].key.pha_id == "beta");

  // probable 900 s × 0.5 + confirmed 2 × 900 s × 1.0
  CHECK(score_risk(matches, policy).value == 900 * 0.5 + 2 * 900 * 1.0);
}

TEST_CASE("matcher rejects malformed observations and policies") {
  Rng rng(44);
  DiagnosisKey key;
  key.tek = generate_tek(rng, IntervalNumber{0});
  ObservedBeacon b;
  b.rpi = derive_rpi(key.tek, IntervalNumber{3});
  b.interval = IntervalNumber{3};
  b.attenuation_db = 50;
  b.duration_s = 900;

  ObservedBeacon bad = b;
  bad.duration_s = -1;
  CHECK_THROWS_AS(match_exposures({key}, {bad}, ExposurePolicy{}),
                  std::invalid_argument);
  bad = b;
  bad.duration_s = 901;
  CHECK_THROWS_AS(match_exposures({key}, {bad}, ExposurePolicy{}),
                  std::invalid_argument);
  bad = b;
  bad.attenuation_db = -1;
  CHECK_THROWS_AS(match_exposures({key}, {bad}, ExposurePolicy{}),
                  std::invalid_argument);

  ExposurePolicy bad_policy;
  bad_policy.weight_confirmed = -1;
  CHECK_THROWS_AS(match_exposures({key}, {b}, bad_policy),
                  std::invalid_argument);

  // below the duration floor → no match at all
  ExposurePolicy strict;
  strict.min_total_duration_s = 1000;
  CHECK(match_exposures({key}, {b}, strict).empty());
}

TEST_CASE("test-vector file round trip") {
  Rng rng(45);
  std::vector<RpiTestVector> vectors;
  for (int i = 0; i < 5; ++i) {
    RpiTestVector v;
    v.tek = rng.next_bytes16();
    v.day_start = static_cast<std::uint32_t>(96 * rng.next_below(100));
    v.interval = v.day_start + static_cast<std::uint32_t>(rng.next_below(96));
    v.rpi = rng.next_bytes16();
    vectors.push_back(v);
  }
  std::stringstream io;
  write_rpi_vectors(io, vectors);
  auto round = read_rpi_vectors(io);
  REQUIRE(round.size() == vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    CHECK(round[i].tek == vectors[i].tek);
    CHECK(round[i].day_start == vectors[i].day_start);
    CHECK(round[i].interval == vectors[i].interval);
    CHECK(round[i].rpi == vectors[i].rpi);
  }
}

TEST_CASE("daily load estimator arithmetic") {
  auto est = estimate_daily_load(10000, 14, 16, 1.0);
  CHECK(est.raw_bytes_per_day == 2240000);
  CHECK(est.reported_bytes_per_day == 2240000.0);
  CHECK(est.rpi_derivations_per_day == 13440000);

  auto zero = estimate_daily_load(0, 14, 16, 2.0);
  CHECK(zero.raw_bytes_per_day == 0);
  CHECK(zero.reported_bytes_per_day == 0.0);
  CHECK(zero.rpi_derivations_per_day == 0);

  auto padded = estimate_daily_load(100, 14, 16, 1.5);
  CHECK(padded.reported_bytes_per_day == 100 * 14 * 16 * 1.5);
  CHECK_THROWS_AS(estimate_daily_load(1, 1, 16, -1.0), std::invalid_argument);
}
