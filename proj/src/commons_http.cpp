#include "encommons/commons_http.hpp"

#include <ctime>
#include <stdexcept>

#include <httplib.h>

namespace en::commons::http {

namespace {

using nlohmann::json;

core::IntervalNumber request_now(const json& body) {
  if (body.contains("now")) {
    const json& v = body["now"];
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xffffffffull)
      throw std::invalid_argument("bad now field");
    return core::IntervalNumber{v.get<std::uint32_t>()};
  }
  return core::interval_from_timestamp(
      static_cast<std::uint64_t>(std::time(nullptr)));
}

std::string string_field(const json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_string())
    throw std::invalid_argument(std::string("missing string field: ") + name);
  return j[name].get<std::string>();
}

Bytes16 hex_field(const json& j, const char* name) {
  return bytes16_from_hex(string_field(j, name));
}

std::uint64_t u64_field_or(const json& j, const char* name,
                           std::uint64_t fallback) {
  if (!j.contains(name)) return fallback;
  if (!j[name].is_number_unsigned())
    throw std::invalid_argument(std::string("bad unsigned field: ") + name);
  return j[name].get<std::uint64_t>();
}

std::uint32_t u32_field(const json& j, const char* name) {
  std::uint64_t v = u64_field_or(j, name, 0xffffffffffffffffull);
  if (v > 0xffffffffull)
    throw std::invalid_argument(std::string("bad interval field: ") + name);
  return static_cast<std::uint32_t>(v);
}

std::set<std::string> tag_field(const json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_array())
    throw std::invalid_argument(std::string("missing tag list: ") + name);
  std::set<std::string> out;
  for (const json& t : j[name]) {
    if (!t.is_string()) throw std::invalid_argument("bad tag");
    out.insert(t.get<std::string>());
  }
  return out;
}

void reply(httplib::Response& res, const json& j) {
  res.set_content(j.dump(), "application/json");
}

template <typename Fn>
void handle(const httplib::Request& req, httplib::Response& res, Fn fn) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded()) body = json::object();
  try {
    reply(res, fn(body));
  } catch (const std::invalid_argument& e) {
    reply(res, json{{"status", static_cast<int>(Status::kRangeViolation)},
                    {"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, json{{"status", static_cast<int>(Status::kTransport)},
                    {"error", e.what()}});
  }
}

Status status_from_wire(const json& j) {
  if (!j.contains("status") || !j["status"].is_number_integer())
    throw std::invalid_argument("missing status");
  int v = j["status"].get<int>();
  if (v < 0 || v > 6) throw std::invalid_argument("bad status value");
  return static_cast<Status>(v);
}

}  // namespace

struct Server::Impl {
  explicit Impl(Instance& inst) : instance(inst) {}
  Instance& instance;
  httplib::Server server;

  void install_routes() {
    server.Get("/v1/info",
               [this](const httplib::Request&, httplib::Response& res) {
                 reply(res, json{{"status", 0},
                                 {"instance_id", instance.id()},
                                 {"record_count", instance.record_count()},
                                 {"max_seq", instance.max_seq()}});
               });

    server.Post("/v1/register_pha", [this](const httplib::Request& req,
                                           httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        if (!body.contains("record"))
          throw std::invalid_argument("missing record");
        PHARecord record = wire::pha_record_from_json(body["record"]);
        Status s = instance.register_pha(record,
                                         string_field(body, "admin_credential"));
        return json{{"status", static_cast<int>(s)}};
      });
    });

    server.Post("/v1/issue_ota", [this](const httplib::Request& req,
                                        httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        auto rt = core::report_type_from_string(
            string_field(body, "report_type"));
        if (!rt) throw std::invalid_argument("bad report type");
        Instance::IssueResult result = instance.issue_ota(
            string_field(body, "pha_id"), hex_field(body, "signature"), *rt,
            core::IntervalNumber{u32_field(body, "first_day")},
            core::IntervalNumber{u32_field(body, "last_day")},
            tag_field(body, "forward_tags"), tag_field(body, "region_tags"),
            u32_field(body, "ttl_days"), request_now(body));
        json j{{"status", static_cast<int>(result.status)}};
        if (result.status == Status::kOk) j["ota"] = wire::to_json(result.ota);
        return j;
      });
    });

    server.Post("/v1/upload_keys", [this](const httplib::Request& req,
                                          httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        if (!body.contains("teks") || !body["teks"].is_array())
          throw std::invalid_argument("missing teks");
        std::vector<core::TemporaryExposureKey> teks;
        for (const json& t : body["teks"]) teks.push_back(wire::tek_from_json(t));
        UploadReceipt receipt = instance.upload_keys(hex_field(body, "token"),
                                                     teks, request_now(body));
        return json{{"status", static_cast<int>(receipt.status)},
                    {"accepted", receipt.accepted},
                    {"received_at", receipt.received_at.value}};
      });
    });

    server.Post("/v1/check_upload_status", [this](const httplib::Request& req,
                                                  httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        Instance::UploadStatusResult result = instance.check_upload_status(
            string_field(body, "pha_id"), hex_field(body, "signature"),
            hex_field(body, "token"));
        return json{{"status", static_cast<int>(result.status)},
                    {"fulfilled", result.upload.fulfilled},
                    {"received_at", result.upload.received_at.value}};
      });
    });

    server.Post("/v1/download_keys", [this](const httplib::Request& req,
                                            httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        DownloadFilter filter =
            body.contains("filter") ? wire::filter_from_json(body["filter"])
                                    : DownloadFilter{};
        Instance::DownloadPage page = instance.download_keys(
            filter, u64_field_or(body, "cursor", 0),
            static_cast<std::size_t>(u64_field_or(body, "limit", 0)));
        json batch = json::array();
        for (const ReplicatedKey& r : page.batch)
          batch.push_back(wire::to_json(r));
        return json{{"status", 0},
                    {"batch", batch},
                    {"next_cursor", page.next_cursor}};
      });
    });

    server.Post("/v1/forward_keys", [this](const httplib::Request& req,
                                           httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        if (!body.contains("records") || !body["records"].is_array())
          throw std::invalid_argument("missing records");
        std::vector<ReplicatedKey> records;
        for (const json& r : body["records"])
          records.push_back(wire::replicated_key_from_json(r));
        std::size_t accepted =
            instance.accept_forwarded(records, request_now(body));
        return json{{"status", 0}, {"accepted", accepted}};
      });
    });
  }
};

Server::Server(Instance& instance) : impl_(new Impl(instance)) {
  impl_->install_routes();
}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) return 0;
  } else if (!impl_->server.bind_to_port(host, port)) {
    return 0;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool Server::listen_blocking(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

void Server::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

Client::Client(std::string base_url) : base_url_(std::move(base_url)) {}

std::optional<json> Client::post(const std::string& path, const json& body) {
  httplib::Client cli(base_url_);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(30, 0);
  httplib::Result res = cli.Post(path, body.dump(), "application/json");
  if (!res || res->status != 200) return std::nullopt;
  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

std::optional<InstanceInfo> Client::info() {
  httplib::Client cli(base_url_);
  cli.set_connection_timeout(5, 0);
  httplib::Result res = cli.Get("/v1/info");
  if (!res || res->status != 200) return std::nullopt;
  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.contains("instance_id")) return std::nullopt;
  InstanceInfo out;
  out.instance_id = j["instance_id"].get<std::string>();
  out.record_count = j.value("record_count", std::uint64_t{0});
  out.max_seq = j.value("max_seq", std::uint64_t{0});
  return out;
}

Status Client::register_pha(const PHARecord& record,
                            const std::string& admin_credential) {
  auto j = post("/v1/register_pha", json{{"record", wire::to_json(record)},
                                         {"admin_credential", admin_credential}});
  if (!j) return Status::kTransport;
  try {
    return status_from_wire(*j);
  } catch (const std::invalid_argument&) {
    return Status::kTransport;
  }
}

Instance::IssueResult Client::issue_ota(
    const std::string& pha_id, const Bytes16& signature,
    core::ReportType report_type, core::IntervalNumber first_day,
    core::IntervalNumber last_day, const std::set<std::string>& forward_tags,
    const std::set<std::string>& region_tags, std::uint32_t ttl_days,
    std::optional<core::IntervalNumber> now) {
  json body{{"pha_id", pha_id},
            {"signature", to_hex(signature)},
            {"report_type", core::to_string(report_type)},
            {"first_day", first_day.value},
            {"last_day", last_day.value},
            {"forward_tags", json::array()},
            {"region_tags", json::array()},
            {"ttl_days", ttl_days}};
  for (const std::string& t : forward_tags) body["forward_tags"].push_back(t);
  for (const std::string& t : region_tags) body["region_tags"].push_back(t);
  if (now) body["now"] = now->value;

  auto j = post("/v1/issue_ota", body);
  if (!j) return {Status::kTransport, {}};
  try {
    Status s = status_from_wire(*j);
    Instance::IssueResult result{s, {}};
    if (s == Status::kOk) result.ota = wire::ota_from_json(j->at("ota"));
    return result;
  } catch (const std::exception&) {
    return {Status::kTransport, {}};
  }
}

UploadReceipt Client::upload_keys(
    const Bytes16& token, const std::vector<core::TemporaryExposureKey>& teks,
    std::optional<core::IntervalNumber> now) {
  json body{{"token", to_hex(token)}, {"teks", json::array()}};
  for (const core::TemporaryExposureKey& tek : teks)
    body["teks"].push_back(wire::to_json(tek));
  if (now) body["now"] = now->value;

  auto j = post("/v1/upload_keys", body);
  if (!j) return {Status::kTransport, 0, {}};
  try {
    UploadReceipt receipt;
    receipt.status = status_from_wire(*j);
    receipt.accepted = j->value("accepted", std::uint64_t{0});
    receipt.received_at.value = j->value("received_at", std::uint32_t{0});
    return receipt;
  } catch (const std::exception&) {
    return {Status::kTransport, 0, {}};
  }
}

Instance::UploadStatusResult Client::check_upload_status(
    const std::string& pha_id, const Bytes16& signature, const Bytes16& token) {
  auto j = post("/v1/check_upload_status", json{{"pha_id", pha_id},
                                                {"signature", to_hex(signature)},
                                                {"token", to_hex(token)}});
  if (!j) return {Status::kTransport, {}};
  try {
    Instance::UploadStatusResult result;
    result.status = status_from_wire(*j);
    result.upload.fulfilled = j->value("fulfilled", false);
    result.upload.received_at.value = j->value("received_at", std::uint32_t{0});
    return result;
  } catch (const std::exception&) {
    return {Status::kTransport, {}};
  }
}

Client::DownloadResult Client::download_keys(const DownloadFilter& filter,
                                             std::uint64_t cursor,
                                             std::size_t limit) {
  json body{{"filter", wire::to_json(filter)}, {"cursor", cursor}};
  if (limit) body["limit"] = limit;

  auto j = post("/v1/download_keys", body);
  if (!j) return {Status::kTransport, {}, cursor};
  try {
    DownloadResult result;
    result.status = status_from_wire(*j);
    result.next_cursor = j->value("next_cursor", cursor);
    if (j->contains("batch")) {
      for (const json& r : j->at("batch"))
        result.batch.push_back(wire::replicated_key_from_json(r));
    }
    return result;
  } catch (const std::exception&) {
    return {Status::kTransport, {}, cursor};
  }
}

Instance::TransferResult Client::forward_keys(
    const std::vector<ReplicatedKey>& records,
    std::optional<core::IntervalNumber> now) {
  json body{{"records", json::array()}};
  for (const ReplicatedKey& r : records)
    body["records"].push_back(wire::to_json(r));
  if (now) body["now"] = now->value;

  auto j = post("/v1/forward_keys", body);
  if (!j) return {Status::kTransport, 0};
  try {
    Instance::TransferResult result;
    result.status = status_from_wire(*j);
    result.count = j->value("accepted", std::uint64_t{0});
    return result;
  } catch (const std::exception&) {
    return {Status::kTransport, 0};
  }
}

void HttpTransport::add_peer(const std::string& name,
                             const std::string& base_url) {
  peers_[name] = base_url;
}

std::optional<std::size_t> HttpTransport::forward(
    const std::string& remote, const std::vector<ReplicatedKey>& records,
    core::IntervalNumber now) {
  auto it = peers_.find(remote);
  if (it == peers_.end()) return std::nullopt;
  Instance::TransferResult result =
      Client(it->second).forward_keys(records, now);
  if (result.status != Status::kOk) return std::nullopt;
  return result.count;
}

std::optional<Transport::Page> HttpTransport::download(
    const std::string& remote, const DownloadFilter& filter,
    std::uint64_t cursor, std::size_t limit) {
  auto it = peers_.find(remote);
  if (it == peers_.end()) return std::nullopt;
  Client::DownloadResult result =
      Client(it->second).download_keys(filter, cursor, limit);
  if (result.status != Status::kOk) return std::nullopt;
  return Page{std::move(result.batch), result.next_cursor};
}

}  // namespace en::commons::http
