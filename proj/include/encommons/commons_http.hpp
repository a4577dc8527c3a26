#pragma once

// HTTP binding of the exchange protocol: JSON-over-POST endpoints under /v1,
// a typed client, and a Transport that reaches peers by base URL. Protocol
// errors travel as the `status` field of a 200 response; anything below that
// (connect failure, malformed response) maps to Status::kTransport.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "encommons/commons.hpp"

namespace en::commons::http {

// Serves one instance. Endpoints:
//   POST /v1/register_pha        {record, admin_credential}
//   POST /v1/issue_ota           {pha_id, signature, report_type, first_day,
//                                 last_day, forward_tags, region_tags,
//                                 ttl_days, now?}
//   POST /v1/upload_keys         {token, teks, now?}
//   POST /v1/check_upload_status {pha_id, signature, token}
//   POST /v1/download_keys       {filter, cursor, limit?}
//   POST /v1/forward_keys        {records, now?}
//   GET  /v1/info
// Requests may carry "now" (an interval number) to pin the receive clock;
// otherwise the server stamps with wall time.
class Server {
 public:
  explicit Server(Instance& instance);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and serves on a background thread; returns the bound port, or 0 on
  // failure. port 0 picks a free port.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop() (for the CLI serve command).
  bool listen_blocking(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

struct InstanceInfo {
  std::string instance_id;
  std::uint64_t record_count = 0;
  std::uint64_t max_seq = 0;
};

// Client for one remote instance, addressed by base URL
// ("http://127.0.0.1:8080"). Mirrors the Instance operation results, with
// Status::kTransport standing in when the remote cannot be reached or talks
// garbage.
class Client {
 public:
  explicit Client(std::string base_url);

  std::optional<InstanceInfo> info();
  Status register_pha(const PHARecord& record,
                      const std::string& admin_credential);
  Instance::IssueResult issue_ota(
      const std::string& pha_id, const Bytes16& signature,
      core::ReportType report_type, core::IntervalNumber first_day,
      core::IntervalNumber last_day, const std::set<std::string>& forward_tags,
      const std::set<std::string>& region_tags, std::uint32_t ttl_days,
      std::optional<core::IntervalNumber> now = std::nullopt);
  UploadReceipt upload_keys(const Bytes16& token,
                            const std::vector<core::TemporaryExposureKey>& teks,
                            std::optional<core::IntervalNumber> now = std::nullopt);
  Instance::UploadStatusResult check_upload_status(const std::string& pha_id,
                                                   const Bytes16& signature,
                                                   const Bytes16& token);
  struct DownloadResult {
    Status status = Status::kOk;
    std::vector<ReplicatedKey> batch;
    std::uint64_t next_cursor = 0;
  };
  DownloadResult download_keys(const DownloadFilter& filter,
                               std::uint64_t cursor, std::size_t limit = 0);
  Instance::TransferResult forward_keys(
      const std::vector<ReplicatedKey>& records,
      std::optional<core::IntervalNumber> now = std::nullopt);

 private:
  std::optional<nlohmann::json> post(const std::string& path,
                                     const nlohmann::json& body);
  std::string base_url_;
};

// Transport over HTTP: remote instance names resolve to base URLs.
class HttpTransport : public Transport {
 public:
  void add_peer(const std::string& name, const std::string& base_url);

  std::optional<std::size_t> forward(const std::string& remote,
                                     const std::vector<ReplicatedKey>& records,
                                     core::IntervalNumber now) override;
  std::optional<Page> download(const std::string& remote,
                               const DownloadFilter& filter,
                               std::uint64_t cursor,
                               std::size_t limit) override;

 private:
  std::map<std::string, std::string> peers_;
};

}  // namespace en::commons::http
