#include <doctest.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "encommons/kernels/scan.hpp"
#include "encommons/sim.hpp"

using namespace en;
using namespace en::sim;

namespace {

WorldConfig hub_world() {
  // Three people share one place for two intervals; person 2 also makes a
  // solo stop elsewhere.
  WorldConfig config;
  config.seed = 7;
  config.n_people = 3;
  config.places = {{"hub", LighthouseKind::kNone},
                   {"annex", LighthouseKind::kNone}};
  config.visit_schedule = {
      {0, "hub", core::IntervalNumber{10}, core::IntervalNumber{12}},
      {1, "hub", core::IntervalNumber{10}, core::IntervalNumber{12}},
      {2, "hub", core::IntervalNumber{10}, core::IntervalNumber{12}},
      {2, "annex", core::IntervalNumber{30}, core::IntervalNumber{31}},
  };
  return config;
}

RandomWorldParams dense_params() {
  RandomWorldParams params;
  params.n_people = 40;
  params.n_places = 4;
  params.n_days = 2;
  params.visits_per_person_day = 3;
  params.max_visit_intervals = 6;
  params.n_diagnosed = 6;
  return params;
}

bool any_logged_rpi_leaks(const WorldRun& run) {
  std::string haystack = run.commons_export;
  for (const std::string& r : run.risk_reports) haystack += r;
  for (const std::string& n : run.notifications) haystack += n;
  for (const Bytes16& rpi : run.logged_rpis)
    if (kern::contains(haystack, to_hex(rpi))) return true;
  return false;
}

}  // namespace

TEST_CASE("lighthouse kinds have names") {
  CHECK(to_string(LighthouseKind::kNone) == "none");
  CHECK(to_string(LighthouseKind::kActive) == "active");
  CHECK(to_string(LighthouseKind::kPassive) == "passive");
}

TEST_CASE("world validation rejects malformed configs") {
  WorldConfig good = hub_world();
  CHECK_NOTHROW(validate(good));

  WorldConfig bad = good;
  bad.participation = 1.5;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.radio_loss_prob = 1.0;  // nothing would ever be heard
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.interview_recall_prob = -0.1;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.publish_days_back = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.attenuation_lo_db = 60;
  bad.attenuation_hi_db = 50;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.policy.weight_confirmed = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.places.push_back({"no spaces allowed", LighthouseKind::kNone});
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.places.push_back({"hub", LighthouseKind::kActive});  // duplicate
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.visit_schedule.push_back(
      {9, "hub", core::IntervalNumber{0}, core::IntervalNumber{1}});
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.visit_schedule.push_back(
      {0, "nowhere", core::IntervalNumber{0}, core::IntervalNumber{1}});
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.visit_schedule.push_back(
      {0, "hub", core::IntervalNumber{5}, core::IntervalNumber{5}});
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = good;
  bad.diagnoses.push_back({9, core::IntervalNumber{0}});
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("world configs round-trip through json") {
  WorldConfig config = hub_world();
  config.places[1].lighthouse = LighthouseKind::kPassive;
  config.diagnoses = {{0, core::IntervalNumber{90}}};
  config.radio_loss_prob = 0.25;
  config.interview_recall_prob = 0.75;
  config.publish_days_back = 3;
  config.policy.weight_probable = 0.25;

  nlohmann::json j = to_json(config);
  WorldConfig back = world_config_from_json(j);
  CHECK(to_json(back).dump() == j.dump());

  // trailing fields are optional and default
  nlohmann::json trimmed = j;
  trimmed.erase("publish_days_back");
  trimmed.erase("attenuation_lo_db");
  trimmed.erase("attenuation_hi_db");
  trimmed.erase("policy");
  WorldConfig defaults = world_config_from_json(trimmed);
  CHECK(defaults.publish_days_back == 14);
  CHECK(defaults.attenuation_lo_db == 40.0);
  CHECK(defaults.attenuation_hi_db == 70.0);
  CHECK(defaults.policy.weight_probable == 0.5);

  nlohmann::json bad = j;
  bad["places"][0]["lighthouse"] = "sometimes";
  CHECK_THROWS_AS(world_config_from_json(bad), std::invalid_argument);
  nlohmann::json missing = j;
  missing.erase("n_people");
  CHECK_THROWS(world_config_from_json(missing));
}

TEST_CASE("ground truth lists schedule co-presence only") {
  WorldConfig config = hub_world();
  ContactGroundTruth truth = ground_truth(config);

  // 3 people pairwise at the hub over two intervals; the solo stop pairs
  // with no one
  REQUIRE(truth.pairs.size() == 6);
  for (const auto& pair : truth.pairs) {
    CHECK(pair.person_a < pair.person_b);
    CHECK(pair.place_id == "hub");
    CHECK((pair.interval.value == 10 || pair.interval.value == 11));
  }
  CHECK(std::is_sorted(
      truth.pairs.begin(), truth.pairs.end(),
      [](const ContactGroundTruth::Pair& a, const ContactGroundTruth::Pair& b) {
        return std::tie(a.person_a, a.person_b, a.interval.value) <
               std::tie(b.person_a, b.person_b, b.interval.value);
      }));

  // participation is a runtime property, not a schedule property
  WorldConfig nobody = config;
  nobody.participation = 0.0;
  CHECK(ground_truth(nobody).pairs.size() == 6);
}

TEST_CASE("an empty schedule runs to an empty result") {
  WorldConfig config;
  config.seed = 3;
  config.n_people = 5;
  config.places = {{"idle", LighthouseKind::kActive}};
  WorldRun run = run_world_detailed(config);
  CHECK(run.metrics.true_contacts == 0);
  CHECK(run.metrics.detected_notifications == 0);
  CHECK(run.metrics.notified_persons.empty());
  CHECK(run.commons_export.empty());
  CHECK(run.logged_rpis.empty());
}

TEST_CASE("identical seeds give identical worlds") {
  RandomWorldParams params = dense_params();
  params.lighthouse_active_frac = 0.4;
  params.lighthouse_passive_frac = 0.3;
  params.participation = 0.7;
  params.radio_loss_prob = 0.1;
  params.interview_recall_prob = 0.8;
  WorldConfig config = random_world_config(99, params);

  WorldRun a = run_world_detailed(config);
  WorldRun b = run_world_detailed(config);
  CHECK(to_json(a.metrics).dump() == to_json(b.metrics).dump());
  CHECK(a.commons_export == b.commons_export);
  CHECK(a.risk_reports == b.risk_reports);
  CHECK(a.notifications == b.notifications);
  CHECK(a.logged_rpis == b.logged_rpis);
  CHECK(a.device_teks == b.device_teks);
  CHECK(a.passive_log_entries == b.passive_log_entries);
}

TEST_CASE("full participation and a clean channel detect everything") {
  WorldConfig config = random_world_config(11, dense_params());
  SimMetrics metrics = run_world(config);
  REQUIRE(metrics.true_contacts > 0);
  CHECK(metrics.detected_notifications == metrics.true_contacts);
  CHECK(metrics.detection_rate == 1.0);
  CHECK_FALSE(metrics.notified_persons.empty());
}

TEST_CASE("zero participation detects nothing but counts the schedule") {
  WorldConfig config = random_world_config(11, dense_params());
  config.participation = 0.0;
  WorldRun run = run_world_detailed(config);
  CHECK(run.metrics.true_contacts > 0);
  CHECK(run.metrics.detected_notifications == 0);
  CHECK(run.metrics.detection_rate == 0.0);
  CHECK(run.metrics.notified_persons.empty());
  // nobody had a phone, no lighthouse existed, so nothing was ever uploaded
  CHECK(run.commons_export == "en-commons-export v1\n");
  CHECK(run.logged_rpis.empty());
}

TEST_CASE("raising participation only ever helps") {
  WorldConfig config = random_world_config(17, dense_params());
  std::uint64_t last_detected = 0;
  std::set<std::uint32_t> last_notified;
  for (double p : {0.25, 0.5, 0.75, 1.0}) {
    config.participation = p;
    SimMetrics metrics = run_world(config);
    CHECK(metrics.detected_notifications >= last_detected);
    CHECK(std::includes(metrics.notified_persons.begin(),
                        metrics.notified_persons.end(), last_notified.begin(),
                        last_notified.end()));
    last_detected = metrics.detected_notifications;
    last_notified = metrics.notified_persons;
  }
}

TEST_CASE("notification latency counts days between contact and diagnosis") {
  WorldConfig config;
  config.seed = 23;
  config.n_people = 2;
  config.places = {{"cafe", LighthouseKind::kNone}};
  config.visit_schedule = {
      // day 0: one shared interval
      {0, "cafe", core::IntervalNumber{5}, core::IntervalNumber{6}},
      {1, "cafe", core::IntervalNumber{5}, core::IntervalNumber{6}},
      // day 1: another, before the diagnosis
      {0, "cafe", core::IntervalNumber{106}, core::IntervalNumber{107}},
      {1, "cafe", core::IntervalNumber{106}, core::IntervalNumber{107}},
  };
  config.diagnoses = {{0, core::IntervalNumber{146}}};

  SimMetrics metrics = run_world(config);
  CHECK(metrics.true_contacts == 2);
  CHECK(metrics.detected_notifications == 2);
  CHECK(metrics.notified_persons == std::set<std::uint32_t>{1});
  REQUIRE(metrics.notification_latency_days.size() == 2);
  CHECK(metrics.notification_latency_days.at(0) == 1);
  CHECK(metrics.notification_latency_days.at(1) == 1);

  nlohmann::json j = to_json(metrics);
  CHECK(j["notification_latency_days"]["0"] == 1);
  CHECK(j["notification_latency_days"]["1"] == 1);
  CHECK(j["true_contacts"] == 2);
  CHECK(j["notified_persons"] == nlohmann::json::array({1}));
}

TEST_CASE("lighthouses log, publish, and self-detect") {
  WorldConfig config;
  config.seed = 29;
  config.n_people = 2;
  config.places = {{"cafe", LighthouseKind::kActive},
                   {"depot", LighthouseKind::kPassive}};
  config.visit_schedule = {
      {0, "cafe", core::IntervalNumber{8}, core::IntervalNumber{12}},
      {1, "cafe", core::IntervalNumber{8}, core::IntervalNumber{12}},
      {0, "depot", core::IntervalNumber{20}, core::IntervalNumber{24}},
  };
  config.diagnoses = {{0, core::IntervalNumber{90}}};

  WorldRun run = run_world_detailed(config);
  // the diagnosed phone's keys reach person 1 directly
  CHECK(run.metrics.true_contacts == 4);
  CHECK(run.metrics.detected_notifications == 4);
  // person 0 heard the (published) cafe and depot lighthouses, so the
  // patient's own phone flags exposure too
  CHECK(run.metrics.notified_persons == std::set<std::uint32_t>{0, 1});
  // the cafe lighthouse heard the diagnosed phone and finds it in the store
  CHECK(run.metrics.lighthouse_self_detections == 1);
  // passive units never listen
  CHECK(run.passive_log_entries == 0);

  REQUIRE(run.risk_reports.size() == 1);
  nlohmann::json report = nlohmann::json::parse(run.risk_reports[0]);
  CHECK(report["pseudonym"] == "beacon-0");
  CHECK(report["per_day"].size() == 1);
  CHECK(report["per_day"][0]["match_count"].get<int>() >= 1);

  // the export carries the phone's key and both lighthouses' keys
  std::istringstream export_lines(run.commons_export);
  std::string line;
  std::getline(export_lines, line);
  CHECK(line == "en-commons-export v1");
  std::size_t rows = 0;
  while (std::getline(export_lines, line)) {
    ++rows;
    CHECK(line.find(",confirmed,sim-pha,sim,sim-exchange,") !=
          std::string::npos);
  }
  CHECK(rows == 3);

  // heard identifiers stay on the devices that heard them
  CHECK_FALSE(run.logged_rpis.empty());
  CHECK_FALSE(any_logged_rpi_leaks(run));
}

TEST_CASE("unrecalled places stay silent") {
  WorldConfig config;
  config.seed = 31;
  config.n_people = 1;
  config.participation = 0.0;  // the patient carries no phone
  config.places = {{"cafe", LighthouseKind::kActive}};
  config.visit_schedule = {
      {0, "cafe", core::IntervalNumber{8}, core::IntervalNumber{12}},
  };
  config.diagnoses = {{0, core::IntervalNumber{90}}};
  config.interview_recall_prob = 0.0;

  WorldRun run = run_world_detailed(config);
  CHECK(run.commons_export == "en-commons-export v1\n");
  CHECK(run.metrics.notified_persons.empty());
  CHECK(run.metrics.lighthouse_self_detections == 0);

  // with a sure interview, the same world publishes the cafe key
  config.interview_recall_prob = 1.0;
  WorldRun told = run_world_detailed(config);
  CHECK(told.commons_export != "en-commons-export v1\n");
}

TEST_CASE("the fixed indirect-exposure scenario plays out") {
  AveryBernieOutcome outcome = scenario_avery_bernie();

  CHECK(outcome.bernie_notified);
  CHECK(outcome.bernie_risk == 6 * 900.0);
  CHECK(outcome.shop_published);
  CHECK(outcome.bus_published);
  // the shop lighthouse heard nothing: its visitor carried no phone
  CHECK(outcome.shop_self_detections == 0);
  // and schedule-wise the two people never overlapped
  CHECK(outcome.metrics.true_contacts == 0);
  CHECK(outcome.metrics.detected_notifications == 0);
  CHECK(outcome.metrics.notified_persons == std::set<std::uint32_t>{1});

  // deterministic end to end
  AveryBernieOutcome again = scenario_avery_bernie();
  CHECK(again.commons_export == outcome.commons_export);
  CHECK(again.bernie_notification == outcome.bernie_notification);

  // the notification names the matched key, not the place
  nlohmann::json note = nlohmann::json::parse(outcome.bernie_notification);
  CHECK(note["risk"] == 5400.0);
  REQUIRE(note["matches"].size() == 1);
  CHECK(note["matches"][0]["intervals"].size() == 6);
  CHECK(note["matches"][0]["min_attenuation_db"] == 52.0);

  // two records in the store, both from the lighthouses' health authority
  std::istringstream export_lines(outcome.commons_export);
  std::string line;
  std::getline(export_lines, line);
  CHECK(line == "en-commons-export v1");
  std::size_t rows = 0;
  while (std::getline(export_lines, line)) {
    ++rows;
    CHECK(line.find(",0,confirmed,metro-pha,metro,metro-exchange,") !=
          std::string::npos);
  }
  CHECK(rows == 2);

  // nothing anyone can download or read mentions people or places
  std::string published = outcome.commons_export + outcome.bernie_notification;
  for (const std::string& label : outcome.place_labels)
    CHECK_FALSE(kern::contains(published, label));
  for (const char* name : {"Avery", "avery", "Bernie", "bernie"})
    CHECK_FALSE(kern::contains(published, std::string_view(name)));
}

TEST_CASE("participation sweeps scale detection quadratically") {
  RandomWorldParams params = dense_params();
  params.n_people = 60;
  params.n_places = 6;
  WorldConfig base = random_world_config(2024, params);

  CHECK_THROWS_AS(participation_sweep(base, {0.5}, 0), std::invalid_argument);

  std::vector<double> levels = {0.3, 0.6, 0.9};
  SweepResult sweep = participation_sweep(base, levels, 4);
  REQUIRE(sweep.rows.size() == levels.size() * 4);
  REQUIRE(sweep.means.size() == levels.size());

  for (std::size_t i = 0; i < levels.size(); ++i) {
    double sum = 0;
    for (std::uint32_t t = 0; t < 4; ++t) {
      const SweepRow& row = sweep.rows[i * 4 + t];
      CHECK(row.participation == levels[i]);
      CHECK(row.trial == t);
      CHECK(row.detection_rate >= 0.0);
      CHECK(row.detection_rate <= 1.0);
      sum += row.detection_rate;
    }
    CHECK(sweep.means[i].first == levels[i]);
    CHECK(sweep.means[i].second == doctest::Approx(sum / 4));
  }

  // a detection needs both parties on the app, so the log-log response is
  // roughly quadratic even at this size
  CHECK(sweep.loglog_slope > 1.0);
  CHECK(sweep.loglog_slope < 3.0);

  std::ostringstream csv;
  write_sweep_csv(csv, sweep);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "p,trial,detection_rate");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == sweep.rows.size());

  // same base, same answer
  SweepResult repeat = participation_sweep(base, levels, 4);
  CHECK(repeat.loglog_slope == sweep.loglog_slope);
}

TEST_CASE("random worlds are deterministic and well formed") {
  RandomWorldParams params = dense_params();
  params.lighthouse_active_frac = 0.5;
  params.lighthouse_passive_frac = 0.25;
  WorldConfig a = random_world_config(555, params);
  WorldConfig b = random_world_config(555, params);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(to_json(random_world_config(556, params)).dump() !=
        to_json(a).dump());

  CHECK(a.seed == 555);
  CHECK(a.n_people == params.n_people);
  CHECK(a.places.size() == params.n_places);
  CHECK(a.visit_schedule.size() ==
        params.n_people * params.n_days * params.visits_per_person_day);
  CHECK(a.diagnoses.size() == params.n_diagnosed);
  CHECK(a.publish_days_back == params.n_days + 1);
  std::set<std::uint32_t> diagnosed;
  for (const Diagnosis& d : a.diagnoses) {
    diagnosed.insert(d.person);
    CHECK(d.at.value == params.n_days * 96 - 1);
  }
  CHECK(diagnosed.size() == params.n_diagnosed);

  RandomWorldParams no_lights = dense_params();
  WorldConfig plain = random_world_config(555, no_lights);
  for (const PlaceSpec& p : plain.places)
    CHECK(p.lighthouse == LighthouseKind::kNone);

  RandomWorldParams all_active = dense_params();
  all_active.lighthouse_active_frac = 1.0;
  WorldConfig lit = random_world_config(555, all_active);
  for (const PlaceSpec& p : lit.places)
    CHECK(p.lighthouse == LighthouseKind::kActive);

  RandomWorldParams empty = dense_params();
  empty.n_places = 0;
  CHECK_THROWS_AS(random_world_config(1, empty), std::invalid_argument);
}
