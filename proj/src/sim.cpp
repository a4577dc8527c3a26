#include "encommons/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "encommons/commons.hpp"
#include "encommons/device.hpp"
#include "encommons/rng.hpp"

namespace en::sim {

namespace {

// Per-entity RNG stream ids, forked off the world seed.
constexpr std::uint64_t kStreamParticipation = 1;
constexpr std::uint64_t kStreamDevices = 2;
constexpr std::uint64_t kStreamRadio = 3;
constexpr std::uint64_t kStreamAttenuation = 4;
constexpr std::uint64_t kStreamInterview = 5;
constexpr std::uint64_t kStreamKeys = 6;
constexpr std::uint64_t kLighthouseDeviceOffset = 0x10000000ull;

struct SimDevice {
  device::DeviceState state;
  Rng rng{0};
};

// interval → place index → sorted unique persons present
using Presence = std::map<std::uint32_t, std::map<std::uint32_t, std::vector<std::uint32_t>>>;

std::map<std::string, std::uint32_t> index_places(const WorldConfig& config) {
  std::map<std::string, std::uint32_t> index;
  for (std::uint32_t k = 0; k < config.places.size(); ++k)
    index[config.places[k].place_id] = k;
  return index;
}

Presence build_presence(const WorldConfig& config,
                        const std::map<std::string, std::uint32_t>& place_index) {
  Presence presence;
  for (const Visit& v : config.visit_schedule) {
    std::uint32_t pl = place_index.at(v.place);
    for (std::uint32_t iv = v.start.value; iv < v.end.value; ++iv)
      presence[iv][pl].push_back(v.person);
  }
  for (auto& [iv, by_place] : presence) {
    for (auto& [pl, people] : by_place) {
      std::sort(people.begin(), people.end());
      people.erase(std::unique(people.begin(), people.end()), people.end());
    }
  }
  return presence;
}

std::string notification_json(double risk,
                              const std::vector<core::ExposureMatch>& matches) {
  nlohmann::ordered_json j;
  j["risk"] = risk;
  j["matches"] = nlohmann::ordered_json::array();
  for (const core::ExposureMatch& m : matches) {
    nlohmann::ordered_json e;
    e["tek"] = to_hex(m.key.tek.key_material);
    e["day_start"] = m.key.tek.day_start.value;
    e["report_type"] = core::to_string(m.key.report_type);
    nlohmann::ordered_json ivs = nlohmann::ordered_json::array();
    for (core::IntervalNumber iv : m.matched_intervals) ivs.push_back(iv.value);
    e["intervals"] = ivs;
    e["total_duration_s"] = m.total_duration_s;
    e["min_attenuation_db"] = m.min_attenuation_db;
    j["matches"].push_back(e);
  }
  return j.dump();
}

std::vector<core::DiagnosisKey> download_all(const commons::Instance& inst) {
  std::vector<core::DiagnosisKey> keys;
  for (const commons::ReplicatedKey& r : inst.all_records())
    keys.push_back(r.diagnosis_key);
  return keys;
}

WorldRun run_impl(const WorldConfig& config, bool detailed) {
  validate(config);
  WorldRun run;
  if (config.visit_schedule.empty() && config.diagnoses.empty()) return run;

  auto place_index = index_places(config);

  std::uint32_t min_iv = 0xffffffffu, max_iv = 0;
  for (const Visit& v : config.visit_schedule) {
    min_iv = std::min(min_iv, v.start.value);
    max_iv = std::max(max_iv, v.end.value - 1);
  }
  for (const Diagnosis& d : config.diagnoses) {
    min_iv = std::min(min_iv, d.at.value);
    max_iv = std::max(max_iv, d.at.value);
  }
  const std::uint32_t first_day = min_iv - min_iv % core::kIntervalsPerDay;
  const std::uint32_t last_day = max_iv - max_iv % core::kIntervalsPerDay;
  const std::uint32_t n_days = (last_day - first_day) / core::kIntervalsPerDay + 1;
  const std::uint32_t retention =
      std::max<std::uint32_t>(core::kDefaultRetentionDays, n_days + 1);
  auto day_index = [&](std::uint32_t iv) {
    return (iv - iv % core::kIntervalsPerDay - first_day) /
           core::kIntervalsPerDay;
  };

  Rng world(config.seed);
  Rng part_stream = world.fork(kStreamParticipation);
  Rng device_stream = world.fork(kStreamDevices);
  Rng radio = world.fork(kStreamRadio);
  Rng atten = world.fork(kStreamAttenuation);
  Rng interview = world.fork(kStreamInterview);
  Rng key_stream = world.fork(kStreamKeys);

  // Whether person i runs the app: a per-person uniform compared against the
  // participation level, so raising the level only ever adds participants.
  std::vector<bool> participates(config.n_people);
  for (std::uint32_t i = 0; i < config.n_people; ++i)
    participates[i] = part_stream.fork(i).next_unit() < config.participation;

  commons::InstanceConfig inst_config;
  inst_config.instance_id = "sim-exchange";
  inst_config.admin_secret = "sim-admin";
  inst_config.seed = key_stream.next_u64();
  commons::Instance inst(inst_config);

  commons::PHARecord pha;
  pha.pha_id = "sim-pha";
  pha.public_key = key_stream.next_bytes16();
  pha.display_name = "Simulated Health Authority";
  pha.region_tags = {"sim"};
  if (inst.register_pha(pha, "sim-admin") != commons::Status::kOk)
    throw std::runtime_error("sim: PHA registration failed");

  // Devices. Phones exist only for participants; every configured lighthouse
  // exists regardless.
  std::map<std::uint32_t, SimDevice> phones;
  std::map<std::pair<std::uint32_t, std::uint32_t>, Bytes16> phone_day_key;
  auto note_phone_key = [&](std::uint32_t person, const SimDevice& d) {
    phone_day_key[{person, day_index(d.state.current_tek.day_start.value)}] =
        d.state.current_tek.key_material;
    if (detailed) run.device_teks.push_back(d.state.current_tek.key_material);
  };
  for (std::uint32_t i = 0; i < config.n_people; ++i) {
    if (!participates[i]) continue;
    SimDevice d;
    d.rng = device_stream.fork(i);
    d.state = device::device_new(device::DeviceRole::kPhone, d.rng,
                                 core::IntervalNumber{first_day}, retention);
    note_phone_key(i, d);
    phones.emplace(i, std::move(d));
  }

  std::map<std::uint32_t, SimDevice> lighthouses;  // by place index
  auto note_lighthouse_key = [&](const SimDevice& d) {
    if (detailed) run.device_teks.push_back(d.state.current_tek.key_material);
  };
  for (std::uint32_t k = 0; k < config.places.size(); ++k) {
    if (config.places[k].lighthouse == LighthouseKind::kNone) continue;
    SimDevice d;
    d.rng = device_stream.fork(kLighthouseDeviceOffset + k);
    d.state = device::device_new(
        config.places[k].lighthouse == LighthouseKind::kActive
            ? device::DeviceRole::kLighthouseActive
            : device::DeviceRole::kLighthousePassive,
        d.rng, core::IntervalNumber{first_day}, retention);
    d.state.place_label = config.places[k].place_id + " operator label";
    note_lighthouse_key(d);
    lighthouses.emplace(k, std::move(d));
  }

  Presence presence = build_presence(config, place_index);

  // ---- radio event loop ----
  for (std::uint32_t day = 0; day < n_days; ++day) {
    const std::uint32_t day_start = first_day + day * core::kIntervalsPerDay;
    if (day > 0) {
      for (auto& [person, d] : phones) {
        device::advance_day(d.state, d.rng, core::IntervalNumber{day_start});
        note_phone_key(person, d);
      }
      for (auto& [pl, d] : lighthouses) {
        device::advance_day(d.state, d.rng, core::IntervalNumber{day_start});
        note_lighthouse_key(d);
      }
    }

    for (std::uint32_t iv = day_start; iv < day_start + core::kIntervalsPerDay;
         ++iv) {
      auto slot = presence.find(iv);
      if (slot == presence.end()) continue;
      for (const auto& [pl, people] : slot->second) {
        auto lh = lighthouses.find(pl);

        // Broadcast identifiers active in this place this interval.
        struct Beacon {
          bool from_lighthouse = false;
          std::uint32_t sender = 0;  // person id when from a phone
          core::RollingProximityIdentifier rpi;
        };
        std::vector<Beacon> beacons;
        for (std::uint32_t person : people) {
          auto ph = phones.find(person);
          if (ph == phones.end()) continue;
          beacons.push_back({false, person,
                             device::current_broadcast(ph->second.state,
                                                       core::IntervalNumber{iv})});
        }
        if (lh != lighthouses.end()) {
          beacons.push_back({true, pl,
                             device::current_broadcast(lh->second.state,
                                                       core::IntervalNumber{iv})});
        }
        if (beacons.empty()) continue;

        auto deliver = [&](device::DeviceState& listener, bool is_lighthouse,
                           std::uint32_t listener_id) {
          for (const Beacon& b : beacons) {
            if (b.from_lighthouse == is_lighthouse && b.sender == listener_id)
              continue;  // own broadcast
            if (config.radio_loss_prob > 0 &&
                radio.bernoulli(config.radio_loss_prob))
              continue;
            double a = atten.uniform(config.attenuation_lo_db,
                                     config.attenuation_hi_db);
            device::record_observation(listener, b.rpi,
                                       core::IntervalNumber{iv}, a,
                                       core::kIntervalSeconds);
          }
        };
        for (std::uint32_t person : people) {
          auto ph = phones.find(person);
          if (ph == phones.end()) continue;
          deliver(ph->second.state, false, person);
        }
        if (lh != lighthouses.end() &&
            lh->second.state.role == device::DeviceRole::kLighthouseActive)
          deliver(lh->second.state, true, pl);
      }
    }
  }

  // ---- diagnoses: OTAs, key publication, uploads ----
  std::vector<Diagnosis> diags = config.diagnoses;
  std::stable_sort(diags.begin(), diags.end(),
                   [](const Diagnosis& a, const Diagnosis& b) {
                     if (a.at != b.at) return a.at < b.at;
                     return a.person < b.person;
                   });

  std::map<std::uint32_t, std::uint32_t> diag_day_of;    // person → day index
  std::map<std::uint32_t, std::uint32_t> window_first_of;  // person → day index

  auto issue = [&](core::IntervalNumber wf, core::IntervalNumber wl,
                   core::IntervalNumber at) {
    std::string canonical = commons::wire::canonical_issue_request(
        inst.id(), pha.pha_id, core::ReportType::kConfirmed, wf, wl, {},
        pha.region_tags, 1);
    auto result = inst.issue_ota(
        pha.pha_id, commons::wire::sign(pha.public_key, canonical),
        core::ReportType::kConfirmed, wf, wl, {}, pha.region_tags, 1, at);
    if (result.status != commons::Status::kOk)
      throw std::runtime_error("sim: OTA issuance failed");
    return result.ota;
  };

  // Per-person visit lists, for interviews and opportunity accounting.
  std::map<std::uint32_t, std::vector<const Visit*>> visits_of;
  for (const Visit& v : config.visit_schedule)
    visits_of[v.person].push_back(&v);

  for (const Diagnosis& diag : diags) {
    const std::uint32_t diag_day =
        diag.at.value - diag.at.value % core::kIntervalsPerDay;
    const std::uint64_t back =
        std::uint64_t(config.publish_days_back - 1) * core::kIntervalsPerDay;
    const std::uint32_t window_first = static_cast<std::uint32_t>(
        std::max<std::int64_t>(first_day,
                               std::int64_t(diag_day) - std::int64_t(back)));
    if (!diag_day_of.count(diag.person)) {
      diag_day_of[diag.person] = day_index(diag_day);
      window_first_of[diag.person] = day_index(window_first);
    }

    // Direct path: the patient's own phone publishes its daily keys.
    auto ph = phones.find(diag.person);
    if (ph != phones.end()) {
      commons::OneTimeAuthorization ota =
          issue(core::IntervalNumber{window_first},
                core::IntervalNumber{diag_day}, diag.at);
      std::vector<core::TemporaryExposureKey> teks = device::publish_keys(
          ph->second.state, core::IntervalNumber{window_first},
          core::IntervalNumber{diag_day}, ota);
      commons::UploadReceipt receipt =
          inst.upload_keys(ota.token, teks, diag.at);
      if (receipt.status != commons::Status::kOk)
        throw std::runtime_error("sim: phone upload failed");
    }

    // Indirect path: the interview walks the patient's visited places; each
    // recalled place with a lighthouse gets an OTA and publishes its keys
    // for the visited days.
    std::map<std::uint32_t, std::set<std::uint32_t>> visited;  // place → days
    auto vl = visits_of.find(diag.person);
    if (vl != visits_of.end()) {
      for (const Visit* v : vl->second) {
        for (std::uint32_t iv = v->start.value; iv < v->end.value; ++iv) {
          if (iv > diag.at.value) break;
          std::uint32_t day = iv - iv % core::kIntervalsPerDay;
          if (day >= window_first && day <= diag_day)
            visited[place_index.at(v->place)].insert(day);
        }
      }
    }
    for (const auto& [pl, days] : visited) {
      auto lh = lighthouses.find(pl);
      if (lh == lighthouses.end()) continue;
      if (!interview.bernoulli(config.interview_recall_prob)) continue;

      commons::OneTimeAuthorization ota =
          issue(core::IntervalNumber{*days.begin()},
                core::IntervalNumber{*days.rbegin()}, diag.at);
      std::vector<core::TemporaryExposureKey> teks;
      for (std::uint32_t day : days) {
        std::vector<core::TemporaryExposureKey> one = device::publish_keys(
            lh->second.state, core::IntervalNumber{day},
            core::IntervalNumber{day}, ota);
        teks.insert(teks.end(), one.begin(), one.end());
      }
      commons::UploadReceipt receipt =
          inst.upload_keys(ota.token, teks, diag.at);
      if (receipt.status != commons::Status::kOk)
        throw std::runtime_error("sim: lighthouse upload failed");
    }
  }

  // ---- exposure opportunities from the schedule ----
  // (diagnosed, other, interval, place), deduplicated; participation-blind.
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>>
      opportunities;
  for (const auto& [p, wd] : diag_day_of) {
    const std::uint32_t wf = window_first_of.at(p);
    auto vl = visits_of.find(p);
    if (vl == visits_of.end()) continue;
    for (const Visit* v : vl->second) {
      std::uint32_t pl = place_index.at(v->place);
      for (std::uint32_t iv = v->start.value; iv < v->end.value; ++iv) {
        std::uint32_t day = day_index(iv);
        if (day < wf || day > wd) continue;
        auto slot = presence.find(iv);
        if (slot == presence.end()) continue;
        auto here = slot->second.find(pl);
        if (here == slot->second.end()) continue;
        for (std::uint32_t b : here->second) {
          if (b != p) opportunities.insert({p, b, iv, pl});
        }
      }
    }
  }
  run.metrics.true_contacts = opportunities.size();

  std::map<std::uint32_t,
           std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>>>
      opps_by_listener;  // other → (diagnosed, interval, place)
  for (const auto& [p, b, iv, pl] : opportunities)
    opps_by_listener[b].push_back({p, iv, pl});

  // ---- downloads and self-checks ----
  std::vector<core::DiagnosisKey> keys = download_all(inst);

  for (auto& [person, d] : phones) {
    auto [risk, matches] = device::self_check(d.state, keys, config.policy);
    if (risk.value > 0) {
      run.metrics.notified_persons.insert(person);
      if (detailed)
        run.notifications.push_back(notification_json(risk.value, matches));
    }

    auto opp = opps_by_listener.find(person);
    if (opp != opps_by_listener.end() && !matches.empty()) {
      std::set<std::pair<Bytes16, std::uint32_t>> matched;
      for (const core::ExposureMatch& m : matches) {
        for (core::IntervalNumber iv : m.matched_intervals)
          matched.insert({m.key.tek.key_material, iv.value});
      }
      for (const auto& [p, iv, pl] : opp->second) {
        auto key_it = phone_day_key.find({p, day_index(iv)});
        if (key_it == phone_day_key.end()) continue;
        if (!matched.count({key_it->second, iv})) continue;
        run.metrics.detected_notifications += 1;
        std::uint32_t lat = diag_day_of.at(p) - day_index(iv);
        run.metrics.notification_latency_days[lat] += 1;
      }
    }
  }

  for (auto& [pl, d] : lighthouses) {
    if (d.state.role == device::DeviceRole::kLighthousePassive) {
      run.passive_log_entries += d.state.observation_log.size();
      continue;
    }
    auto [risk, matches] = device::self_check(d.state, keys, config.policy);
    (void)matches;
    if (risk.value > 0) run.metrics.lighthouse_self_detections += 1;
    if (detailed) {
      device::AggregateRiskReport report = device::make_risk_report(
          d.state, keys, config.policy, "beacon-" + std::to_string(pl));
      run.risk_reports.push_back(device::to_json(report));
    }
  }

  run.metrics.detection_rate =
      run.metrics.true_contacts
          ? double(run.metrics.detected_notifications) /
                double(run.metrics.true_contacts)
          : 0.0;

  if (detailed) {
    for (const auto& [person, d] : phones) {
      for (const core::ObservedBeacon& b : d.state.observation_log)
        run.logged_rpis.push_back(b.rpi.bytes);
    }
    for (const auto& [pl, d] : lighthouses) {
      for (const core::ObservedBeacon& b : d.state.observation_log)
        run.logged_rpis.push_back(b.rpi.bytes);
    }
    std::ostringstream out;
    inst.write_export(out);
    run.commons_export = out.str();
  }
  return run;
}

double loglog_slope(const std::vector<std::pair<double, double>>& means) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (const auto& [p, rate] : means) {
    if (p <= 0 || rate <= 0) continue;
    double x = std::log(p), y = std::log(rate);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return 0.0;
  double denom = double(n) * sxx - sx * sx;
  if (denom == 0) return 0.0;
  return (double(n) * sxy - sx * sy) / denom;
}

}  // namespace

std::string_view to_string(LighthouseKind kind) {
  switch (kind) {
    case LighthouseKind::kNone:
      return "none";
    case LighthouseKind::kActive:
      return "active";
    case LighthouseKind::kPassive:
      return "passive";
  }
  return "none";
}

void validate(const WorldConfig& config) {
  if (!(config.participation >= 0 && config.participation <= 1))
    throw std::invalid_argument("participation out of range");
  if (!(config.radio_loss_prob >= 0 && config.radio_loss_prob < 1))
    throw std::invalid_argument("radio loss out of range");
  if (!(config.interview_recall_prob >= 0 && config.interview_recall_prob <= 1))
    throw std::invalid_argument("interview recall out of range");
  if (config.publish_days_back < 1)
    throw std::invalid_argument("publish window must cover at least one day");
  if (!std::isfinite(config.attenuation_lo_db) ||
      !std::isfinite(config.attenuation_hi_db) ||
      config.attenuation_lo_db < 0 ||
      config.attenuation_lo_db > config.attenuation_hi_db)
    throw std::invalid_argument("bad attenuation band");
  core::validate(config.policy);

  std::set<std::string> ids;
  for (const PlaceSpec& p : config.places) {
    if (!is_wire_safe_id(p.place_id))
      throw std::invalid_argument("bad place id: " + p.place_id);
    if (!ids.insert(p.place_id).second)
      throw std::invalid_argument("duplicate place id: " + p.place_id);
  }
  for (const Visit& v : config.visit_schedule) {
    if (v.person >= config.n_people)
      throw std::invalid_argument("visit by unknown person");
    if (!ids.count(v.place))
      throw std::invalid_argument("visit to unknown place: " + v.place);
    if (v.start.value >= v.end.value)
      throw std::invalid_argument("empty or inverted visit range");
  }
  for (const Diagnosis& d : config.diagnoses) {
    if (d.person >= config.n_people)
      throw std::invalid_argument("diagnosis of unknown person");
  }
}

nlohmann::json to_json(const WorldConfig& config) {
  nlohmann::json places = nlohmann::json::array();
  for (const PlaceSpec& p : config.places)
    places.push_back({{"place_id", p.place_id},
                      {"lighthouse", to_string(p.lighthouse)}});
  nlohmann::json visits = nlohmann::json::array();
  for (const Visit& v : config.visit_schedule)
    visits.push_back({{"person", v.person},
                      {"place", v.place},
                      {"start", v.start.value},
                      {"end", v.end.value}});
  nlohmann::json diagnoses = nlohmann::json::array();
  for (const Diagnosis& d : config.diagnoses)
    diagnoses.push_back({{"person", d.person}, {"at", d.at.value}});
  return nlohmann::json{
      {"seed", config.seed},
      {"n_people", config.n_people},
      {"participation", config.participation},
      {"places", places},
      {"visit_schedule", visits},
      {"diagnoses", diagnoses},
      {"radio_loss_prob", config.radio_loss_prob},
      {"interview_recall_prob", config.interview_recall_prob},
      {"publish_days_back", config.publish_days_back},
      {"attenuation_lo_db", config.attenuation_lo_db},
      {"attenuation_hi_db", config.attenuation_hi_db},
      {"policy",
       {{"max_attenuation_db", config.policy.max_attenuation_db},
        {"min_total_duration_s", config.policy.min_total_duration_s},
        {"weight_confirmed", config.policy.weight_confirmed},
        {"weight_probable", config.policy.weight_probable}}}};
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig config;
  config.seed = j.at("seed").get<std::uint64_t>();
  config.n_people = j.at("n_people").get<std::uint32_t>();
  config.participation = j.at("participation").get<double>();
  for (const nlohmann::json& p : j.at("places")) {
    PlaceSpec spec;
    spec.place_id = p.at("place_id").get<std::string>();
    std::string kind = p.at("lighthouse").get<std::string>();
    if (kind == "none")
      spec.lighthouse = LighthouseKind::kNone;
    else if (kind == "active")
      spec.lighthouse = LighthouseKind::kActive;
    else if (kind == "passive")
      spec.lighthouse = LighthouseKind::kPassive;
    else
      throw std::invalid_argument("bad lighthouse kind: " + kind);
    config.places.push_back(std::move(spec));
  }
  for (const nlohmann::json& v : j.at("visit_schedule")) {
    config.visit_schedule.push_back(
        {v.at("person").get<std::uint32_t>(), v.at("place").get<std::string>(),
         core::IntervalNumber{v.at("start").get<std::uint32_t>()},
         core::IntervalNumber{v.at("end").get<std::uint32_t>()}});
  }
  for (const nlohmann::json& d : j.at("diagnoses")) {
    config.diagnoses.push_back(
        {d.at("person").get<std::uint32_t>(),
         core::IntervalNumber{d.at("at").get<std::uint32_t>()}});
  }
  config.radio_loss_prob = j.at("radio_loss_prob").get<double>();
  config.interview_recall_prob = j.at("interview_recall_prob").get<double>();
  config.publish_days_back = j.value("publish_days_back", std::uint32_t{14});
  config.attenuation_lo_db = j.value("attenuation_lo_db", 40.0);
  config.attenuation_hi_db = j.value("attenuation_hi_db", 70.0);
  if (j.contains("policy")) {
    const nlohmann::json& p = j["policy"];
    config.policy.max_attenuation_db = p.value("max_attenuation_db", 73.0);
    config.policy.min_total_duration_s = p.value("min_total_duration_s", 900.0);
    config.policy.weight_confirmed = p.value("weight_confirmed", 1.0);
    config.policy.weight_probable = p.value("weight_probable", 0.5);
  }
  validate(config);
  return config;
}

ContactGroundTruth ground_truth(const WorldConfig& config) {
  validate(config);
  auto place_index = index_places(config);
  std::vector<std::string> place_ids(config.places.size());
  for (const auto& [id, k] : place_index) place_ids[k] = id;

  Presence presence = build_presence(config, place_index);
  ContactGroundTruth truth;
  for (const auto& [iv, by_place] : presence) {
    for (const auto& [pl, people] : by_place) {
      for (std::size_t i = 0; i < people.size(); ++i) {
        for (std::size_t k = i + 1; k < people.size(); ++k) {
          truth.pairs.push_back({people[i], people[k],
                                 core::IntervalNumber{iv}, place_ids[pl]});
        }
      }
    }
  }
  std::sort(truth.pairs.begin(), truth.pairs.end(),
            [](const ContactGroundTruth::Pair& a,
               const ContactGroundTruth::Pair& b) {
              return std::tie(a.person_a, a.person_b, a.interval.value,
                              a.place_id) <
                     std::tie(b.person_a, b.person_b, b.interval.value,
                              b.place_id);
            });
  truth.pairs.erase(
      std::unique(truth.pairs.begin(), truth.pairs.end(),
                  [](const ContactGroundTruth::Pair& a,
                     const ContactGroundTruth::Pair& b) {
                    return a.person_a == b.person_a &&
                           a.person_b == b.person_b &&
                           a.interval == b.interval && a.place_id == b.place_id;
                  }),
      truth.pairs.end());
  return truth;
}

nlohmann::json to_json(const SimMetrics& metrics) {
  nlohmann::json notified = nlohmann::json::array();
  for (std::uint32_t p : metrics.notified_persons) notified.push_back(p);
  nlohmann::json latency = nlohmann::json::object();
  for (const auto& [days, count] : metrics.notification_latency_days)
    latency[std::to_string(days)] = count;
  return nlohmann::json{
      {"true_contacts", metrics.true_contacts},
      {"detected_notifications", metrics.detected_notifications},
      {"detection_rate", metrics.detection_rate},
      {"notified_persons", notified},
      {"lighthouse_self_detections", metrics.lighthouse_self_detections},
      {"notification_latency_days", latency}};
}

WorldRun run_world_detailed(const WorldConfig& config) {
  return run_impl(config, true);
}

SimMetrics run_world(const WorldConfig& config) {
  return run_impl(config, false).metrics;
}

AveryBernieOutcome scenario_avery_bernie() {
  // Day 0. Avery (no phone) visits the shop (intervals 10–13) and rides the
  // bus (20–23); Bernie's phone rides the same bus later (30–35). Avery is
  // diagnosed at interval 90; the interview reaches both places' lighthouses.
  constexpr std::uint32_t kBernie = 1;
  const core::IntervalNumber day0{0};
  const core::IntervalNumber diagnosed_at{90};

  Rng rng(42);

  commons::InstanceConfig inst_config;
  inst_config.instance_id = "metro-exchange";
  inst_config.admin_secret = "metro-admin";
  inst_config.seed = rng.fork(9).next_u64();
  commons::Instance inst(inst_config);

  commons::PHARecord pha;
  pha.pha_id = "metro-pha";
  pha.public_key = rng.fork(10).next_bytes16();
  pha.display_name = "Metro Health";
  pha.region_tags = {"metro"};
  if (inst.register_pha(pha, "metro-admin") != commons::Status::kOk)
    throw std::runtime_error("scenario: PHA registration failed");

  SimDevice shop{{}, rng.fork(1)};
  shop.state = device::device_new(device::DeviceRole::kLighthouseActive,
                                  shop.rng, day0);
  shop.state.place_label = "Corner Shop";
  SimDevice bus{{}, rng.fork(2)};
  bus.state = device::device_new(device::DeviceRole::kLighthouseActive,
                                 bus.rng, day0);
  bus.state.place_label = "Bus 42";
  SimDevice bernie{{}, rng.fork(3)};
  bernie.state =
      device::device_new(device::DeviceRole::kPhone, bernie.rng, day0);

  // Avery's visits put nothing on the air and hear nothing: no device. The
  // lighthouses broadcast regardless; only Bernie's ride produces traffic.
  for (std::uint32_t iv = 30; iv <= 35; ++iv) {
    core::IntervalNumber at{iv};
    device::record_observation(bernie.state,
                               device::current_broadcast(bus.state, at), at,
                               52.0, core::kIntervalSeconds);
    device::record_observation(bus.state,
                               device::current_broadcast(bernie.state, at), at,
                               52.0, core::kIntervalSeconds);
  }

  // Interview after diagnosis: Avery recalls the shop and the bus; the PHA
  // issues one OTA per place and each lighthouse publishes its day key.
  auto publish_place = [&](SimDevice& lh) {
    std::string canonical = commons::wire::canonical_issue_request(
        inst.id(), pha.pha_id, core::ReportType::kConfirmed, day0, day0, {},
        pha.region_tags, 1);
    auto result = inst.issue_ota(
        pha.pha_id, commons::wire::sign(pha.public_key, canonical),
        core::ReportType::kConfirmed, day0, day0, {}, pha.region_tags, 1,
        diagnosed_at);
    if (result.status != commons::Status::kOk)
      throw std::runtime_error("scenario: OTA issuance failed");
    std::vector<core::TemporaryExposureKey> teks =
        device::publish_keys(lh.state, day0, day0, result.ota);
    commons::UploadReceipt receipt =
        inst.upload_keys(result.ota.token, teks, diagnosed_at);
    if (receipt.status != commons::Status::kOk)
      throw std::runtime_error("scenario: lighthouse upload failed");
  };
  publish_place(shop);
  publish_place(bus);

  std::vector<core::DiagnosisKey> keys = download_all(inst);

  AveryBernieOutcome outcome;
  auto [bernie_risk, bernie_matches] =
      device::self_check(bernie.state, keys, core::ExposurePolicy{});
  outcome.bernie_risk = bernie_risk.value;
  outcome.bernie_notified = bernie_risk.value > 0;
  outcome.bernie_notification =
      notification_json(bernie_risk.value, bernie_matches);

  auto [shop_risk, shop_matches] =
      device::self_check(shop.state, keys, core::ExposurePolicy{});
  (void)shop_matches;
  outcome.shop_self_detections = shop_risk.value > 0 ? 1 : 0;

  for (const commons::ReplicatedKey& r : inst.all_records()) {
    if (r.diagnosis_key.tek == shop.state.current_tek)
      outcome.shop_published = true;
    if (r.diagnosis_key.tek == bus.state.current_tek)
      outcome.bus_published = true;
  }

  std::ostringstream export_stream;
  inst.write_export(export_stream);
  outcome.commons_export = export_stream.str();
  outcome.place_labels = {"Corner Shop", "Bus 42"};

  outcome.metrics.true_contacts = 0;  // Avery and Bernie never overlap
  outcome.metrics.detected_notifications = 0;
  outcome.metrics.detection_rate = 0.0;
  if (outcome.bernie_notified)
    outcome.metrics.notified_persons.insert(kBernie);
  outcome.metrics.lighthouse_self_detections = outcome.shop_self_detections;
  return outcome;
}

SweepResult participation_sweep(const WorldConfig& base,
                                const std::vector<double>& participations,
                                std::uint32_t trials) {
  if (trials < 1) throw std::invalid_argument("need at least one trial");
  SweepResult result;
  Rng seeder(base.seed ^ 0x53574545507f1ull);
  for (std::size_t i = 0; i < participations.size(); ++i) {
    const double p = participations[i];
    double sum = 0;
    for (std::uint32_t t = 0; t < trials; ++t) {
      WorldConfig config = base;
      config.participation = p;
      config.seed = seeder.fork(i).fork(t).next_u64();
      SimMetrics metrics = run_world(config);
      result.rows.push_back({p, t, metrics.detection_rate});
      sum += metrics.detection_rate;
    }
    result.means.push_back({p, sum / trials});
  }
  result.loglog_slope = loglog_slope(result.means);
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "p,trial,detection_rate\n";
  char buf[64];
  for (const SweepRow& row : result.rows) {
    std::snprintf(buf, sizeof buf, "%.12g,%u,%.12g", row.participation,
                  row.trial, row.detection_rate);
    out << buf << '\n';
  }
}

WorldConfig random_world_config(std::uint64_t seed,
                                const RandomWorldParams& params) {
  if (params.n_places == 0 || params.n_people == 0 || params.n_days == 0)
    throw std::invalid_argument("empty world");
  if (params.max_visit_intervals < 1 ||
      params.max_visit_intervals > core::kIntervalsPerDay)
    throw std::invalid_argument("bad visit length bound");

  Rng g(seed ^ 0x57524c44ull);  // schedule stream, decoupled from run seed
  WorldConfig config;
  config.seed = seed;
  config.n_people = params.n_people;
  config.participation = params.participation;
  config.radio_loss_prob = params.radio_loss_prob;
  config.interview_recall_prob = params.interview_recall_prob;
  config.publish_days_back = params.n_days + 1;

  for (std::uint32_t k = 0; k < params.n_places; ++k) {
    PlaceSpec spec;
    spec.place_id = "place-" + std::to_string(k);
    double u = g.next_unit();
    if (u < params.lighthouse_active_frac)
      spec.lighthouse = LighthouseKind::kActive;
    else if (u < params.lighthouse_active_frac + params.lighthouse_passive_frac)
      spec.lighthouse = LighthouseKind::kPassive;
    config.places.push_back(std::move(spec));
  }

  for (std::uint32_t person = 0; person < params.n_people; ++person) {
    for (std::uint32_t day = 0; day < params.n_days; ++day) {
      for (std::uint32_t v = 0; v < params.visits_per_person_day; ++v) {
        std::uint32_t len =
            1 + static_cast<std::uint32_t>(
                    g.next_below(params.max_visit_intervals));
        std::uint32_t off = static_cast<std::uint32_t>(
            g.next_below(core::kIntervalsPerDay - len + 1));
        std::uint32_t start = day * core::kIntervalsPerDay + off;
        config.visit_schedule.push_back(
            {person,
             config.places[g.next_below(params.n_places)].place_id,
             core::IntervalNumber{start}, core::IntervalNumber{start + len}});
      }
    }
  }

  std::set<std::uint32_t> diagnosed;
  std::uint32_t want = std::min(params.n_diagnosed, params.n_people);
  while (diagnosed.size() < want)
    diagnosed.insert(static_cast<std::uint32_t>(g.next_below(params.n_people)));
  const core::IntervalNumber at{params.n_days * core::kIntervalsPerDay - 1};
  for (std::uint32_t person : diagnosed)
    config.diagnoses.push_back({person, at});

  validate(config);
  return config;
}

}  // namespace en::sim
