#pragma once

// Serialization shared by the instance journal, the HTTP endpoints, and the
// CLI: JSON codecs for the exchange types, the canonical strings requests are
// signed over, and the line-oriented key export format.

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "encommons/commons_types.hpp"

namespace en::commons {

// A diagnosis key in transit between instances: the key plus where it first
// entered the federation and its append position at the serving instance.
// Upload tokens never travel with it.
struct ReplicatedKey {
  core::DiagnosisKey diagnosis_key;
  std::string origin_instance;
  std::uint64_t seq = 0;
};

namespace wire {

// JSON codecs. The *_from_json functions throw std::invalid_argument on
// missing fields, wrong types, bad hex, or out-of-range values.
nlohmann::json to_json(const core::DiagnosisKey& key);
core::DiagnosisKey diagnosis_key_from_json(const nlohmann::json& j);

nlohmann::json to_json(const core::TemporaryExposureKey& tek);
core::TemporaryExposureKey tek_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ReplicatedKey& record);
ReplicatedKey replicated_key_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PHARecord& record);
PHARecord pha_record_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DownloadFilter& filter);
DownloadFilter filter_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Subscription& sub);
Subscription subscription_from_json(const nlohmann::json& j);

nlohmann::json to_json(const OneTimeAuthorization& ota);
OneTimeAuthorization ota_from_json(const nlohmann::json& j);

// Canonical request strings. A PHA signs these with its key (CMAC over the
// UTF-8 bytes); the instance recomputes and compares. The instance id is
// part of the string so a signature cannot be replayed against another
// instance.
std::string canonical_issue_request(
    const std::string& instance_id, const std::string& pha_id,
    core::ReportType report_type, core::IntervalNumber first_day,
    core::IntervalNumber last_day, const std::set<std::string>& forward_tags,
    const std::set<std::string>& region_tags, std::uint32_t ttl_days);

std::string canonical_status_request(const std::string& instance_id,
                                     const std::string& pha_id,
                                     const Bytes16& token);

Bytes16 sign(const Bytes16& key, std::string_view canonical);
bool verify(const Bytes16& key, std::string_view canonical,
            const Bytes16& signature);

// Key export: header line "en-commons-export v1", then one record per line
//   tek_hex,day_start,report_type,pha_id,region_tags(;-joined),origin,seq
// (pha_id empty when the record has none). Lossy by design: rolling periods
// and upload times are not carried.
void write_export(std::ostream& out, const std::vector<ReplicatedKey>& records);
std::vector<ReplicatedKey> read_export(std::istream& in);

}  // namespace wire
}  // namespace en::commons
