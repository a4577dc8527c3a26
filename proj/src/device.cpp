#include "encommons/device.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace en::device {

namespace {

// A key or beacon from day D is retained while D is within retention_days of
// the current day (inclusive of the current day itself).
bool within_retention(core::IntervalNumber day, core::IntervalNumber current_day,
                      std::uint32_t retention_days) {
  return static_cast<std::uint64_t>(day.value) +
             static_cast<std::uint64_t>(retention_days) *
                 core::kIntervalsPerDay >=
         current_day.value;
}

}  // namespace

std::string_view to_string(DeviceRole role) {
  switch (role) {
    case DeviceRole::kPhone:
      return "phone";
    case DeviceRole::kLighthouseActive:
      return "lighthouse-active";
    case DeviceRole::kLighthousePassive:
      return "lighthouse-passive";
  }
  return "phone";
}

std::optional<DeviceRole> role_from_string(std::string_view s) {
  if (s == "phone") return DeviceRole::kPhone;
  if (s == "lighthouse-active") return DeviceRole::kLighthouseActive;
  if (s == "lighthouse-passive") return DeviceRole::kLighthousePassive;
  return std::nullopt;
}

DeviceState device_new(DeviceRole role, Rng& entropy, core::IntervalNumber now,
                       std::uint32_t retention_days) {
  if (retention_days < 1)
    throw std::invalid_argument("retention must be at least one day");
  DeviceState device;
  device.role = role;
  device.retention_days = retention_days;
  device.current_tek = core::generate_tek(entropy, now.day_start());
  return device;
}

void advance_day(DeviceState& device, Rng& entropy,
                 core::IntervalNumber new_day_start) {
  if (!new_day_start.is_day_start())
    throw std::invalid_argument("unaligned day start");
  if (new_day_start.value <= device.current_tek.day_start.value)
    throw std::invalid_argument("day must advance");

  device.tek_history.push_back(device.current_tek);
  std::erase_if(device.tek_history, [&](const core::TemporaryExposureKey& tek) {
    return !within_retention(tek.day_start, new_day_start,
                             device.retention_days);
  });
  while (device.tek_history.size() > device.retention_days)
    device.tek_history.erase(device.tek_history.begin());

  device.current_tek = core::generate_tek(entropy, new_day_start);
}

core::RollingProximityIdentifier current_broadcast(const DeviceState& device,
                                                   core::IntervalNumber now) {
  if (now.day_start() != device.current_tek.day_start)
    throw std::out_of_range("time outside current key day; advance_day first");
  return core::derive_rpi(device.current_tek, now);
}

void record_observation(DeviceState& device,
                        const core::RollingProximityIdentifier& rpi,
                        core::IntervalNumber now, double attenuation_db,
                        double duration_s) {
  if (device.role == DeviceRole::kLighthousePassive)
    throw std::logic_error("passive device cannot listen");
  if (!std::isfinite(attenuation_db) || attenuation_db < 0)
    throw std::invalid_argument("bad beacon attenuation");
  if (!(duration_s >= 0) || duration_s > core::kIntervalSeconds)
    throw std::invalid_argument("bad beacon duration");

  device.observation_log.push_back(
      core::ObservedBeacon{rpi, now, attenuation_db, duration_s});
  std::erase_if(device.observation_log, [&](const core::ObservedBeacon& b) {
    return !within_retention(b.interval.day_start(), now.day_start(),
                             device.retention_days);
  });
}

std::pair<core::RiskScore, std::vector<core::ExposureMatch>> self_check(
    const DeviceState& device, const std::vector<core::DiagnosisKey>& keys,
    const core::ExposurePolicy& policy) {
  std::vector<core::ExposureMatch> matches =
      core::match_exposures(keys, device.observation_log, policy);
  core::RiskScore score = core::score_risk(matches, policy);
  return {score, std::move(matches)};
}

std::vector<core::TemporaryExposureKey> publish_keys(
    const DeviceState& device, core::IntervalNumber first_day,
    core::IntervalNumber last_day, const commons::OneTimeAuthorization& ota) {
  if (!first_day.is_day_start() || !last_day.is_day_start())
    throw std::invalid_argument("unaligned day range");
  if (first_day.value > last_day.value)
    throw std::invalid_argument("inverted day range");
  if (first_day.value < ota.first_day.value ||
      last_day.value > ota.last_day.value)
    throw std::out_of_range("day range outside authorization");

  std::vector<core::TemporaryExposureKey> out;
  for (const core::TemporaryExposureKey& tek : device.tek_history) {
    if (tek.day_start.value >= first_day.value &&
        tek.day_start.value <= last_day.value)
      out.push_back(tek);
  }
  const core::TemporaryExposureKey& cur = device.current_tek;
  if (cur.day_start.value >= first_day.value &&
      cur.day_start.value <= last_day.value)
    out.push_back(cur);
  if (out.empty()) throw std::runtime_error("no keys in range");
  return out;
}

AggregateRiskReport make_risk_report(const DeviceState& device,
                                     const std::vector<core::DiagnosisKey>& keys,
                                     const core::ExposurePolicy& policy,
                                     std::string pseudonym) {
  if (device.role != DeviceRole::kLighthouseActive)
    throw std::logic_error("risk reports require an active lighthouse");

  auto [score, matches] = self_check(device, keys, policy);
  (void)score;

  std::map<std::uint32_t, AggregateRiskReport::PerDay> days;
  for (const core::ExposureMatch& m : matches) {
    AggregateRiskReport::PerDay& d = days[m.key.tek.day_start.value];
    d.day_start = m.key.tek.day_start;
    d.match_count += 1;
    d.weighted_risk +=
        m.total_duration_s * core::report_weight(policy, m.key.report_type);
  }

  AggregateRiskReport report;
  report.device_pseudonym = std::move(pseudonym);
  for (auto& [day, entry] : days) report.per_day.push_back(entry);
  report.policy_digest = core::policy_digest(policy);
  return report;
}

std::string to_json(const AggregateRiskReport& report) {
  nlohmann::ordered_json j;
  j["pseudonym"] = report.device_pseudonym;
  j["policy_digest_hex"] = to_hex(report.policy_digest);
  j["per_day"] = nlohmann::ordered_json::array();
  for (const AggregateRiskReport::PerDay& d : report.per_day) {
    j["per_day"].push_back({{"day_start", d.day_start.value},
                            {"match_count", d.match_count},
                            {"weighted_risk", d.weighted_risk}});
  }
  return j.dump();
}

ReceiptCode make_receipt_code(const DeviceState& device,
                              core::IntervalNumber now) {
  if (device.role == DeviceRole::kPhone)
    throw std::logic_error("phones do not issue receipt codes");
  core::RollingProximityIdentifier rpi = current_broadcast(device, now);

  std::uint8_t packed[14];
  std::memcpy(packed, rpi.bytes.data(), 10);
  packed[10] = static_cast<std::uint8_t>(now.value);
  packed[11] = static_cast<std::uint8_t>(now.value >> 8);
  packed[12] = static_cast<std::uint8_t>(now.value >> 16);
  packed[13] = static_cast<std::uint8_t>(now.value >> 24);
  return ReceiptCode{base32_encode(packed)};
}

ReceiptContents decode_receipt_code(const ReceiptCode& code) {
  Bytes decoded = base32_decode(code.code);
  if (decoded.size() != 14)
    throw std::invalid_argument("receipt code has wrong length");
  ReceiptContents contents;
  std::memcpy(contents.rpi_prefix.data(), decoded.data(), 10);
  contents.interval.value = static_cast<std::uint32_t>(decoded[10]) |
                            static_cast<std::uint32_t>(decoded[11]) << 8 |
                            static_cast<std::uint32_t>(decoded[12]) << 16 |
                            static_cast<std::uint32_t>(decoded[13]) << 24;
  return contents;
}

bool check_receipt_code(const ReceiptCode& code,
                        const std::vector<core::DiagnosisKey>& keys) {
  ReceiptContents contents = decode_receipt_code(code);
  for (const core::DiagnosisKey& key : keys) {
    const core::TemporaryExposureKey& tek = key.tek;
    if (contents.interval.value < tek.day_start.value ||
        contents.interval.value >= tek.day_start.value + tek.rolling_period)
      continue;
    core::RollingProximityIdentifier rpi =
        core::derive_rpi(tek, contents.interval);
    if (std::memcmp(rpi.bytes.data(), contents.rpi_prefix.data(), 10) == 0)
      return true;
  }
  return false;
}

}  // namespace en::device
