#pragma once

// Value types shared between the registry/exchange service and its clients:
// PHA registrations, one-time upload authorizations, stored key records, and
// download scoping. Kept separate from the service itself so device code can
// hold an authorization without linking the server.

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "encommons/bytes.hpp"
#include "encommons/core.hpp"

namespace en::commons {

// Wire/status codes shared by the library API, the HTTP endpoints, and the
// CLI exit codes.
enum class Status : int {
  kOk = 0,
  kAuthFailure = 1,
  kUnknownToken = 2,
  kTokenUsed = 3,
  kTokenExpired = 4,
  kRangeViolation = 5,
  kTransport = 6,
};

std::string_view to_string(Status s);

// A registered public-health authority. `public_key` is the verification key
// the instance checks request signatures against (see commons_wire.hpp for
// the canonical signing strings).
struct PHARecord {
  std::string pha_id;
  Bytes16 public_key{};
  std::string display_name;
  std::set<std::string> region_tags;
};

// Single-use upload grant handed by a PHA to a patient (or to a place's
// lighthouse operator). The token is the bearer secret; everything else is
// metadata that ends up on the stored records.
struct OneTimeAuthorization {
  Bytes16 token{};
  std::string issuer;  // pha_id
  core::ReportType report_type = core::ReportType::kConfirmed;
  core::IntervalNumber first_day{0};  // authorized range, inclusive
  core::IntervalNumber last_day{0};
  std::set<std::string> forward_tags;  // remote instances to replicate to
  std::set<std::string> region_tags;
  core::IntervalNumber expiry{0};
  bool used = false;
};

// One stored diagnosis key plus its provenance. `seq` is the append sequence
// within the owning instance; it is local (replicas assign their own).
struct KeyStoreRecord {
  core::DiagnosisKey diagnosis_key;
  Bytes16 ota_token{};
  core::IntervalNumber received_at{0};
  std::string origin_instance;
  std::uint64_t seq = 0;
};

// Download scoping; every absent field means "no constraint". `since` keeps
// keys whose day_start is at or after the given interval.
struct DownloadFilter {
  std::optional<core::IntervalNumber> since;
  std::optional<std::set<std::string>> pha_ids;
  std::optional<std::set<std::string>> region_tags;
  std::optional<std::set<core::ReportType>> report_types;
};

bool filter_admits(const DownloadFilter& filter, const core::DiagnosisKey& key);

// Pull-replication state: "fetch everything matching `filter` from
// `remote_instance` that we have not seen yet".
struct Subscription {
  std::string remote_instance;
  DownloadFilter filter;
  std::uint64_t cursor = 0;
};

struct UploadReceipt {
  Status status = Status::kOk;
  std::size_t accepted = 0;
  core::IntervalNumber received_at{0};
};

struct UploadStatus {
  bool fulfilled = false;
  core::IntervalNumber received_at{0};  // meaningful when fulfilled
};

}  // namespace en::commons
