#include "encommons/commons_wire.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "encommons/kernels/aes128.hpp"

namespace en::commons {

std::string_view to_string(Status s) {
  switch (s) {
    case Status::kOk:
      return "ok";
    case Status::kAuthFailure:
      return "auth failure";
    case Status::kUnknownToken:
      return "unknown token";
    case Status::kTokenUsed:
      return "token already used";
    case Status::kTokenExpired:
      return "token expired";
    case Status::kRangeViolation:
      return "range violation";
    case Status::kTransport:
      return "transport failure";
  }
  return "unknown status";
}

bool filter_admits(const DownloadFilter& filter, const core::DiagnosisKey& key) {
  if (filter.since && key.tek.day_start.value < filter.since->value)
    return false;
  if (filter.pha_ids) {
    if (!key.pha_id || !filter.pha_ids->count(*key.pha_id)) return false;
  }
  if (filter.region_tags) {
    bool any = false;
    for (const std::string& tag : key.region_tags) {
      if (filter.region_tags->count(tag)) {
        any = true;
        break;
      }
    }
    if (!any) return false;
  }
  if (filter.report_types && !filter.report_types->count(key.report_type))
    return false;
  return true;
}

namespace wire {

namespace {

using nlohmann::json;

const json& require_field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end())
    throw std::invalid_argument(std::string("missing field: ") + name);
  return *it;
}

std::uint32_t u32_field(const json& j, const char* name) {
  const json& v = require_field(j, name);
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xffffffffull)
    throw std::invalid_argument(std::string("bad unsigned field: ") + name);
  return v.get<std::uint32_t>();
}

std::uint64_t u64_field(const json& j, const char* name) {
  const json& v = require_field(j, name);
  if (!v.is_number_unsigned())
    throw std::invalid_argument(std::string("bad unsigned field: ") + name);
  return v.get<std::uint64_t>();
}

std::string string_field(const json& j, const char* name) {
  const json& v = require_field(j, name);
  if (!v.is_string())
    throw std::invalid_argument(std::string("bad string field: ") + name);
  return v.get<std::string>();
}

std::set<std::string> tag_set_field(const json& j, const char* name) {
  const json& v = require_field(j, name);
  if (!v.is_array())
    throw std::invalid_argument(std::string("bad tag list: ") + name);
  std::set<std::string> out;
  for (const json& t : v) {
    if (!t.is_string() || !is_wire_safe_id(t.get<std::string>()))
      throw std::invalid_argument(std::string("bad tag in list: ") + name);
    out.insert(t.get<std::string>());
  }
  return out;
}

json tags_to_json(const std::set<std::string>& tags) {
  json arr = json::array();
  for (const std::string& t : tags) arr.push_back(t);
  return arr;
}

core::ReportType report_type_field(const json& j, const char* name) {
  auto rt = core::report_type_from_string(string_field(j, name));
  if (!rt) throw std::invalid_argument("bad report type");
  return *rt;
}

std::string join(const std::set<std::string>& tags) {
  std::string out;
  for (const std::string& t : tags) {
    if (!out.empty()) out += ';';
    out += t;
  }
  return out;
}

}  // namespace

json to_json(const core::TemporaryExposureKey& tek) {
  return json{{"tek", to_hex(tek.key_material)},
              {"day_start", tek.day_start.value},
              {"rolling_period", tek.rolling_period}};
}

core::TemporaryExposureKey tek_from_json(const json& j) {
  core::TemporaryExposureKey tek;
  tek.key_material = bytes16_from_hex(string_field(j, "tek"));
  tek.day_start.value = u32_field(j, "day_start");
  tek.rolling_period =
      j.contains("rolling_period") ? u32_field(j, "rolling_period")
                                   : core::kIntervalsPerDay;
  if (!tek.day_start.is_day_start())
    throw std::invalid_argument("unaligned day start");
  if (tek.rolling_period < 1 || tek.rolling_period > core::kIntervalsPerDay)
    throw std::invalid_argument("rolling period out of range");
  return tek;
}

json to_json(const core::DiagnosisKey& key) {
  json j = to_json(key.tek);
  j["report_type"] = core::to_string(key.report_type);
  if (key.pha_id)
    j["pha_id"] = *key.pha_id;
  else
    j["pha_id"] = nullptr;
  j["region_tags"] = tags_to_json(key.region_tags);
  j["upload_time"] = key.upload_time.value;
  return j;
}

core::DiagnosisKey diagnosis_key_from_json(const json& j) {
  core::DiagnosisKey key;
  key.tek = tek_from_json(j);
  key.report_type = report_type_field(j, "report_type");
  const json& pha = require_field(j, "pha_id");
  if (!pha.is_null()) {
    if (!pha.is_string() || !is_wire_safe_id(pha.get<std::string>()))
      throw std::invalid_argument("bad pha_id");
    key.pha_id = pha.get<std::string>();
  }
  key.region_tags = tag_set_field(j, "region_tags");
  key.upload_time.value = u32_field(j, "upload_time");
  return key;
}

json to_json(const ReplicatedKey& record) {
  return json{{"key", to_json(record.diagnosis_key)},
              {"origin_instance", record.origin_instance},
              {"seq", record.seq}};
}

ReplicatedKey replicated_key_from_json(const json& j) {
  ReplicatedKey record;
  record.diagnosis_key = diagnosis_key_from_json(require_field(j, "key"));
  record.origin_instance = string_field(j, "origin_instance");
  if (!is_wire_safe_id(record.origin_instance))
    throw std::invalid_argument("bad origin instance id");
  record.seq = u64_field(j, "seq");
  return record;
}

json to_json(const PHARecord& record) {
  return json{{"pha_id", record.pha_id},
              {"public_key", to_hex(record.public_key)},
              {"display_name", record.display_name},
              {"region_tags", tags_to_json(record.region_tags)}};
}

PHARecord pha_record_from_json(const json& j) {
  PHARecord record;
  record.pha_id = string_field(j, "pha_id");
  if (!is_wire_safe_id(record.pha_id))
    throw std::invalid_argument("bad pha_id");
  record.public_key = bytes16_from_hex(string_field(j, "public_key"));
  record.display_name = string_field(j, "display_name");
  record.region_tags = tag_set_field(j, "region_tags");
  return record;
}

json to_json(const DownloadFilter& filter) {
  json j = json::object();
  if (filter.since) j["since"] = filter.since->value;
  if (filter.pha_ids) j["pha_ids"] = tags_to_json(*filter.pha_ids);
  if (filter.region_tags) j["region_tags"] = tags_to_json(*filter.region_tags);
  if (filter.report_types) {
    json arr = json::array();
    for (core::ReportType rt : *filter.report_types)
      arr.push_back(std::string(core::to_string(rt)));
    j["report_types"] = arr;
  }
  return j;
}

DownloadFilter filter_from_json(const json& j) {
  DownloadFilter filter;
  if (j.contains("since") && !j["since"].is_null())
    filter.since = core::IntervalNumber{u32_field(j, "since")};
  if (j.contains("pha_ids") && !j["pha_ids"].is_null())
    filter.pha_ids = tag_set_field(j, "pha_ids");
  if (j.contains("region_tags") && !j["region_tags"].is_null())
    filter.region_tags = tag_set_field(j, "region_tags");
  if (j.contains("report_types") && !j["report_types"].is_null()) {
    const json& arr = j["report_types"];
    if (!arr.is_array()) throw std::invalid_argument("bad report_types");
    std::set<core::ReportType> types;
    for (const json& t : arr) {
      if (!t.is_string()) throw std::invalid_argument("bad report_types");
      auto rt = core::report_type_from_string(t.get<std::string>());
      if (!rt) throw std::invalid_argument("bad report type in filter");
      types.insert(*rt);
    }
    filter.report_types = std::move(types);
  }
  return filter;
}

json to_json(const Subscription& sub) {
  return json{{"remote_instance", sub.remote_instance},
              {"filter", to_json(sub.filter)},
              {"cursor", sub.cursor}};
}

Subscription subscription_from_json(const json& j) {
  Subscription sub;
  sub.remote_instance = string_field(j, "remote_instance");
  if (!is_wire_safe_id(sub.remote_instance))
    throw std::invalid_argument("bad remote instance id");
  sub.filter = filter_from_json(require_field(j, "filter"));
  sub.cursor = u64_field(j, "cursor");
  return sub;
}

json to_json(const OneTimeAuthorization& ota) {
  return json{{"token", to_hex(ota.token)},
              {"issuer", ota.issuer},
              {"report_type", core::to_string(ota.report_type)},
              {"first_day", ota.first_day.value},
              {"last_day", ota.last_day.value},
              {"forward_tags", tags_to_json(ota.forward_tags)},
              {"region_tags", tags_to_json(ota.region_tags)},
              {"expiry", ota.expiry.value},
              {"used", ota.used}};
}

OneTimeAuthorization ota_from_json(const json& j) {
  OneTimeAuthorization ota;
  ota.token = bytes16_from_hex(string_field(j, "token"));
  ota.issuer = string_field(j, "issuer");
  ota.report_type = report_type_field(j, "report_type");
  ota.first_day.value = u32_field(j, "first_day");
  ota.last_day.value = u32_field(j, "last_day");
  ota.forward_tags = tag_set_field(j, "forward_tags");
  ota.region_tags = tag_set_field(j, "region_tags");
  ota.expiry.value = u32_field(j, "expiry");
  const json& used = require_field(j, "used");
  if (!used.is_boolean()) throw std::invalid_argument("bad used flag");
  ota.used = used.get<bool>();
  return ota;
}

std::string canonical_issue_request(
    const std::string& instance_id, const std::string& pha_id,
    core::ReportType report_type, core::IntervalNumber first_day,
    core::IntervalNumber last_day, const std::set<std::string>& forward_tags,
    const std::set<std::string>& region_tags, std::uint32_t ttl_days) {
  std::ostringstream s;
  s << "issue_ota|" << instance_id << '|' << pha_id << '|'
    << core::to_string(report_type) << '|' << first_day.value << '|'
    << last_day.value << '|' << join(forward_tags) << '|' << join(region_tags)
    << '|' << ttl_days;
  return s.str();
}

std::string canonical_status_request(const std::string& instance_id,
                                     const std::string& pha_id,
                                     const Bytes16& token) {
  return "check_upload_status|" + instance_id + '|' + pha_id + '|' +
         to_hex(token);
}

Bytes16 sign(const Bytes16& key, std::string_view canonical) {
  return kern::aes_cmac(key, canonical);
}

bool verify(const Bytes16& key, std::string_view canonical,
            const Bytes16& signature) {
  return kern::aes_cmac(key, canonical) == signature;
}

void write_export(std::ostream& out,
                  const std::vector<ReplicatedKey>& records) {
  out << "en-commons-export v1\n";
  for (const ReplicatedKey& r : records) {
    out << to_hex(r.diagnosis_key.tek.key_material) << ','
        << r.diagnosis_key.tek.day_start.value << ','
        << core::to_string(r.diagnosis_key.report_type) << ','
        << r.diagnosis_key.pha_id.value_or("") << ','
        << join(r.diagnosis_key.region_tags) << ',' << r.origin_instance << ','
        << r.seq << '\n';
  }
}

std::vector<ReplicatedKey> read_export(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "en-commons-export v1")
    throw std::invalid_argument("bad export header");

  std::vector<ReplicatedKey> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 7)
      throw std::invalid_argument("malformed export line: " + line);

    ReplicatedKey r;
    r.diagnosis_key.tek.key_material = bytes16_from_hex(fields[0]);
    r.diagnosis_key.tek.day_start.value =
        static_cast<std::uint32_t>(std::stoul(fields[1]));
    r.diagnosis_key.tek.rolling_period = core::kIntervalsPerDay;
    auto rt = core::report_type_from_string(fields[2]);
    if (!rt) throw std::invalid_argument("bad report type: " + fields[2]);
    r.diagnosis_key.report_type = *rt;
    if (!fields[3].empty()) {
      if (!is_wire_safe_id(fields[3]))
        throw std::invalid_argument("bad pha_id: " + fields[3]);
      r.diagnosis_key.pha_id = fields[3];
    }
    if (!fields[4].empty()) {
      std::size_t tag_start = 0;
      for (std::size_t i = 0; i <= fields[4].size(); ++i) {
        if (i == fields[4].size() || fields[4][i] == ';') {
          std::string tag = fields[4].substr(tag_start, i - tag_start);
          if (!is_wire_safe_id(tag))
            throw std::invalid_argument("bad region tag: " + tag);
          r.diagnosis_key.region_tags.insert(tag);
          tag_start = i + 1;
        }
      }
    }
    if (!is_wire_safe_id(fields[5]))
      throw std::invalid_argument("bad origin instance: " + fields[5]);
    r.origin_instance = fields[5];
    r.seq = std::stoull(fields[6]);
    if (!r.diagnosis_key.tek.day_start.is_day_start())
      throw std::invalid_argument("unaligned day start in export");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wire
}  // namespace en::commons
