#pragma once

// Protocol participants: phones carried by people and lighthouses installed
// in places. All three roles run the same daily-key schedule and broadcast
// the same rolling identifiers; they differ only in whether they listen
// (passive lighthouses never do) and in what they may report.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "encommons/commons_types.hpp"
#include "encommons/core.hpp"
#include "encommons/rng.hpp"

namespace en::device {

enum class DeviceRole {
  kPhone,
  kLighthouseActive,   // broadcasts and listens
  kLighthousePassive,  // transmit-only
};

std::string_view to_string(DeviceRole role);
std::optional<DeviceRole> role_from_string(std::string_view s);

struct DeviceState {
  DeviceRole role = DeviceRole::kPhone;
  core::TemporaryExposureKey current_tek;
  // Oldest first; day_start strictly increasing; at most retention_days
  // entries, all within the retention window of the current day.
  std::vector<core::TemporaryExposureKey> tek_history;
  std::vector<core::ObservedBeacon> observation_log;
  // Operator-facing only. Never copied into any published or reported value.
  std::optional<std::string> place_label;
  std::uint32_t retention_days = core::kDefaultRetentionDays;
};

// Risk summary an active lighthouse hands to its health authority: per-day
// counts and weighted totals only — no identifiers, no key material.
struct AggregateRiskReport {
  struct PerDay {
    core::IntervalNumber day_start{0};
    std::uint64_t match_count = 0;
    double weighted_risk = 0.0;
  };
  std::string device_pseudonym;
  std::vector<PerDay> per_day;  // ascending day_start
  std::array<std::uint8_t, 8> policy_digest{};
};

// JSON with fields pseudonym, policy_digest_hex,
// per_day: [{day_start, match_count, weighted_risk}].
std::string to_json(const AggregateRiskReport& report);

// Printable co-presence token: base32 (uppercase, unpadded) over the first
// 10 bytes of the broadcast identifier followed by the little-endian
// interval number. 23 characters.
struct ReceiptCode {
  std::string code;
};

struct ReceiptContents {
  std::array<std::uint8_t, 10> rpi_prefix{};
  core::IntervalNumber interval{0};
};

DeviceState device_new(DeviceRole role, Rng& entropy, core::IntervalNumber now,
                       std::uint32_t retention_days = core::kDefaultRetentionDays);

// Rotates to a fresh key for new_day_start; the old key moves into history
// and anything older than the retention window is dropped.
void advance_day(DeviceState& device, Rng& entropy,
                 core::IntervalNumber new_day_start);

// The identifier this device is sending over the air right now. Valid only
// while `now` falls in the current key's day; advance_day first otherwise.
core::RollingProximityIdentifier current_broadcast(const DeviceState& device,
                                                   core::IntervalNumber now);

// Appends a heard beacon and prunes the log to the retention window.
// Passive lighthouses refuse: they have no receiver.
void record_observation(DeviceState& device,
                        const core::RollingProximityIdentifier& rpi,
                        core::IntervalNumber now, double attenuation_db,
                        double duration_s);

// Local, offline exposure check of the device's own log against a downloaded
// key list. Pure: no state change.
std::pair<core::RiskScore, std::vector<core::ExposureMatch>> self_check(
    const DeviceState& device, const std::vector<core::DiagnosisKey>& keys,
    const core::ExposurePolicy& policy);

// Keys to hand to the exchange under the given authorization. Both the
// requested range and the authorization are validated locally; the output
// carries key material and day starts only — no label, no observations.
std::vector<core::TemporaryExposureKey> publish_keys(
    const DeviceState& device, core::IntervalNumber first_day,
    core::IntervalNumber last_day, const commons::OneTimeAuthorization& ota);

// Active lighthouses only.
AggregateRiskReport make_risk_report(const DeviceState& device,
                                     const std::vector<core::DiagnosisKey>& keys,
                                     const core::ExposurePolicy& policy,
                                     std::string pseudonym);

// Lighthouse roles only (this is what gets printed on receipts).
ReceiptCode make_receipt_code(const DeviceState& device,
                              core::IntervalNumber now);

// Throws std::invalid_argument on a malformed code string.
ReceiptContents decode_receipt_code(const ReceiptCode& code);

// True iff some key covers the code's interval and derives an identifier
// with the code's 10-byte prefix.
bool check_receipt_code(const ReceiptCode& code,
                        const std::vector<core::DiagnosisKey>& keys);

}  // namespace en::device
