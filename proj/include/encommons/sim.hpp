#pragma once

// Deterministic discrete-event simulation: people with (or without) phones,
// places with optional lighthouses, a health authority, and an exchange
// instance, driven by a scripted visit schedule. One protocol interval
// (900 s) is the simulation tick. Identical seeds give identical metrics and
// identical exchange state.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "encommons/bytes.hpp"
#include "encommons/core.hpp"

namespace en::sim {

enum class LighthouseKind { kNone, kActive, kPassive };

std::string_view to_string(LighthouseKind kind);

struct PlaceSpec {
  std::string place_id;
  LighthouseKind lighthouse = LighthouseKind::kNone;
};

// People are dense integer ids [0, n_people). A visit covers the half-open
// interval range [start, end).
struct Visit {
  std::uint32_t person = 0;
  std::string place;
  core::IntervalNumber start{0};
  core::IntervalNumber end{0};
};

struct Diagnosis {
  std::uint32_t person = 0;
  core::IntervalNumber at{0};
};

struct WorldConfig {
  std::uint64_t seed = 1;
  std::uint32_t n_people = 0;
  double participation = 1.0;  // probability a person carries the app
  std::vector<PlaceSpec> places;
  std::vector<Visit> visit_schedule;
  std::vector<Diagnosis> diagnoses;
  double radio_loss_prob = 0.0;       // per directed pair per interval
  double interview_recall_prob = 1.0; // per visited place at diagnosis
  std::uint32_t publish_days_back = core::kDefaultRetentionDays;
  double attenuation_lo_db = 40.0;
  double attenuation_hi_db = 70.0;
  core::ExposurePolicy policy;
};

void validate(const WorldConfig& config);
nlohmann::json to_json(const WorldConfig& config);
WorldConfig world_config_from_json(const nlohmann::json& j);

// Who was co-present with whom, straight from the schedule — no radio, no
// participation. Stored with person_a < person_b.
struct ContactGroundTruth {
  struct Pair {
    std::uint32_t person_a = 0;
    std::uint32_t person_b = 0;
    core::IntervalNumber interval{0};
    std::string place_id;
  };
  std::vector<Pair> pairs;  // sorted, unique
};

ContactGroundTruth ground_truth(const WorldConfig& config);

struct SimMetrics {
  // Directed exposure opportunities: (diagnosed person, other person,
  // interval, place) co-presence tuples whose day falls inside the diagnosed
  // person's publication window. Counted from the schedule alone.
  std::uint64_t true_contacts = 0;
  // Opportunities the other party actually matched at that interval.
  std::uint64_t detected_notifications = 0;
  double detection_rate = 0.0;  // detected / true (0 when true == 0)
  std::set<std::uint32_t> notified_persons;
  std::uint64_t lighthouse_self_detections = 0;
  // diagnosis day minus contact day, per detected opportunity
  std::map<std::uint32_t, std::uint64_t> notification_latency_days;
};

nlohmann::json to_json(const SimMetrics& metrics);

// Everything a privacy or determinism test wants to look at afterwards.
struct WorldRun {
  SimMetrics metrics;
  std::string commons_export;             // full store, export file format
  std::vector<std::string> risk_reports;  // JSON, one per active lighthouse
  std::vector<std::string> notifications; // JSON, one per notified phone
  std::vector<Bytes16> logged_rpis;       // every identifier any device heard
  std::vector<Bytes16> device_teks;       // every key any device generated
  std::uint64_t passive_log_entries = 0;  // across passive lighthouses
};

WorldRun run_world_detailed(const WorldConfig& config);
SimMetrics run_world(const WorldConfig& config);

// The fixed indirect-exposure scenario: Avery (no phone) visits a shop and a
// bus; Bernie (phone) rides the same bus later that day; Avery is diagnosed;
// the interview notifies both places' lighthouses, which publish their keys.
struct AveryBernieOutcome {
  SimMetrics metrics;
  bool bernie_notified = false;
  double bernie_risk = 0.0;
  bool shop_published = false;
  bool bus_published = false;
  std::uint64_t shop_self_detections = 0;
  std::string commons_export;
  std::string bernie_notification;  // serialized self-check payload
  std::vector<std::string> place_labels;  // operator labels, for leak checks
};

AveryBernieOutcome scenario_avery_bernie();

struct SweepRow {
  double participation = 0.0;
  std::uint32_t trial = 0;
  double detection_rate = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::pair<double, double>> means;  // (participation, mean rate)
  double loglog_slope = 0.0;  // least-squares over positive means
};

// Reruns the base world at each participation level with per-trial derived
// seeds; the schedule stays fixed, only masks and draws vary.
SweepResult participation_sweep(const WorldConfig& base,
                                const std::vector<double>& participations,
                                std::uint32_t trials);

void write_sweep_csv(std::ostream& out, const SweepResult& result);

// Deterministic random world generator for property tests and sweeps.
struct RandomWorldParams {
  std::uint32_t n_people = 100;
  std::uint32_t n_places = 12;
  std::uint32_t n_days = 3;
  std::uint32_t visits_per_person_day = 2;
  std::uint32_t max_visit_intervals = 3;
  std::uint32_t n_diagnosed = 5;
  double lighthouse_active_frac = 0.0;
  double lighthouse_passive_frac = 0.0;
  double participation = 1.0;
  double radio_loss_prob = 0.0;
  double interview_recall_prob = 1.0;
};

WorldConfig random_world_config(std::uint64_t seed,
                                const RandomWorldParams& params);

}  // namespace en::sim
