#include "encommons/commons.hpp"

#include <algorithm>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <stdexcept>

namespace en::commons {

namespace {

constexpr std::size_t kPullPageSize = 256;

bool all_wire_safe(const std::set<std::string>& tags) {
  return std::all_of(tags.begin(), tags.end(),
                     [](const std::string& t) { return is_wire_safe_id(t); });
}

bool tek_well_formed(const core::TemporaryExposureKey& tek) {
  return tek.day_start.is_day_start() && tek.rolling_period >= 1 &&
         tek.rolling_period <= core::kIntervalsPerDay;
}

void require_valid_replicated(const ReplicatedKey& r) {
  if (!is_wire_safe_id(r.origin_instance))
    throw std::invalid_argument("bad origin instance id");
  if (!tek_well_formed(r.diagnosis_key.tek))
    throw std::invalid_argument("malformed key in forwarded record");
  if (r.diagnosis_key.pha_id && !is_wire_safe_id(*r.diagnosis_key.pha_id))
    throw std::invalid_argument("bad pha_id in forwarded record");
  if (!all_wire_safe(r.diagnosis_key.region_tags))
    throw std::invalid_argument("bad region tag in forwarded record");
}

}  // namespace

Instance::Instance(InstanceConfig config)
    : config_(std::move(config)),
      rng_(config_.seed ? Rng(config_.seed) : Rng::from_system_entropy()) {
  if (!is_wire_safe_id(config_.instance_id))
    throw std::invalid_argument("bad instance id");
  if (!config_.data_dir.empty()) replay_journal();
}

void Instance::replay_journal() {
  namespace fs = std::filesystem;
  fs::create_directories(config_.data_dir);
  fs::path path = fs::path(config_.data_dir) / "journal.jsonl";

  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json event = nlohmann::json::parse(line, nullptr, false);
      if (event.is_discarded())
        throw std::runtime_error("corrupt journal at line " +
                                 std::to_string(line_no));
      apply_event(event);
    }
  }
  journal_out_.open(path, std::ios::app);
  if (!journal_out_)
    throw std::runtime_error("cannot open journal for append: " +
                             path.string());
}

void Instance::journal(const nlohmann::json& event) {
  if (!journal_out_.is_open()) return;
  journal_out_ << event.dump() << '\n';
  journal_out_.flush();
}

void Instance::apply_event(const nlohmann::json& event) {
  const std::string ev = event.at("ev").get<std::string>();
  if (ev == "pha") {
    PHARecord record = wire::pha_record_from_json(event.at("record"));
    phas_[record.pha_id] = std::move(record);
  } else if (ev == "ota") {
    OneTimeAuthorization ota = wire::ota_from_json(event.at("ota"));
    otas_[ota.token] = std::move(ota);
  } else if (ev == "ota_used") {
    Bytes16 token = bytes16_from_hex(event.at("token").get<std::string>());
    auto it = otas_.find(token);
    if (it == otas_.end())
      throw std::runtime_error("journal: use of unknown token");
    it->second.used = true;
    fulfilled_[token] =
        core::IntervalNumber{event.at("received_at").get<std::uint32_t>()};
  } else if (ev == "key") {
    KeyStoreRecord rec;
    rec.diagnosis_key = wire::diagnosis_key_from_json(event.at("key"));
    rec.ota_token = bytes16_from_hex(event.at("ota_token").get<std::string>());
    rec.received_at =
        core::IntervalNumber{event.at("received_at").get<std::uint32_t>()};
    rec.origin_instance = event.at("origin").get<std::string>();
    rec.seq = event.at("seq").get<std::uint64_t>();
    if (rec.seq != records_.size() + 1)
      throw std::runtime_error("journal: sequence gap");
    seen_.insert({rec.diagnosis_key.tek.key_material,
                  rec.diagnosis_key.tek.day_start.value});
    records_.push_back(std::move(rec));
  } else if (ev == "fwd_q") {
    PendingForward p;
    p.id = event.at("id").get<std::uint64_t>();
    p.remote = event.at("remote").get<std::string>();
    for (const nlohmann::json& r : event.at("records"))
      p.records.push_back(wire::replicated_key_from_json(r));
    next_forward_id_ = std::max(next_forward_id_, p.id + 1);
    pending_.push_back(std::move(p));
  } else if (ev == "fwd_done") {
    std::uint64_t id = event.at("id").get<std::uint64_t>();
    std::erase_if(pending_,
                  [id](const PendingForward& p) { return p.id == id; });
  } else if (ev == "sub") {
    Subscription sub = wire::subscription_from_json(event.at("sub"));
    subs_[sub.remote_instance] = std::move(sub);
  } else if (ev == "sub_cursor") {
    auto it = subs_.find(event.at("remote").get<std::string>());
    if (it == subs_.end())
      throw std::runtime_error("journal: cursor for unknown subscription");
    it->second.cursor = event.at("cursor").get<std::uint64_t>();
  } else {
    throw std::runtime_error("journal: unknown event " + ev);
  }
}

std::size_t Instance::store_new_locked(const core::DiagnosisKey& key,
                                       const Bytes16& ota_token,
                                       core::IntervalNumber received_at,
                                       const std::string& origin,
                                       bool write_journal) {
  auto identity = std::make_pair(key.tek.key_material, key.tek.day_start.value);
  if (seen_.count(identity)) return 0;

  KeyStoreRecord rec;
  rec.diagnosis_key = key;
  rec.ota_token = ota_token;
  rec.received_at = received_at;
  rec.origin_instance = origin;
  rec.seq = records_.size() + 1;
  if (write_journal) {
    journal({{"ev", "key"},
             {"key", wire::to_json(key)},
             {"ota_token", to_hex(ota_token)},
             {"received_at", received_at.value},
             {"origin", origin},
             {"seq", rec.seq}});
  }
  seen_.insert(identity);
  records_.push_back(std::move(rec));
  return 1;
}

Status Instance::register_pha(const PHARecord& record,
                              std::string_view admin_credential) {
  std::unique_lock lock(mu_);
  if (admin_credential != config_.admin_secret || config_.admin_secret.empty())
    return Status::kAuthFailure;
  if (!is_wire_safe_id(record.pha_id) || !all_wire_safe(record.region_tags))
    return Status::kRangeViolation;
  if (record.public_key == Bytes16{}) return Status::kRangeViolation;
  if (phas_.count(record.pha_id)) return Status::kRangeViolation;

  journal({{"ev", "pha"}, {"record", wire::to_json(record)}});
  phas_[record.pha_id] = record;
  return Status::kOk;
}

std::optional<PHARecord> Instance::find_pha(const std::string& pha_id) const {
  std::shared_lock lock(mu_);
  auto it = phas_.find(pha_id);
  if (it == phas_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Instance::pha_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, record] : phas_) out.push_back(id);
  return out;
}

Instance::IssueResult Instance::issue_ota(
    const std::string& pha_id, const Bytes16& signature,
    core::ReportType report_type, core::IntervalNumber first_day,
    core::IntervalNumber last_day, const std::set<std::string>& forward_tags,
    const std::set<std::string>& region_tags, std::uint32_t ttl_days,
    core::IntervalNumber now) {
  std::unique_lock lock(mu_);

  auto pha = phas_.find(pha_id);
  if (pha == phas_.end()) return {Status::kAuthFailure, {}};
  std::string canonical = wire::canonical_issue_request(
      id(), pha_id, report_type, first_day, last_day, forward_tags,
      region_tags, ttl_days);
  if (!wire::verify(pha->second.public_key, canonical, signature))
    return {Status::kAuthFailure, {}};

  if (!first_day.is_day_start() || !last_day.is_day_start() ||
      first_day.value > last_day.value || ttl_days < 1 ||
      !all_wire_safe(forward_tags) || !all_wire_safe(region_tags))
    return {Status::kRangeViolation, {}};

  OneTimeAuthorization ota;
  do {
    ota.token = rng_.next_bytes16();
  } while (otas_.count(ota.token));
  ota.issuer = pha_id;
  ota.report_type = report_type;
  ota.first_day = first_day;
  ota.last_day = last_day;
  ota.forward_tags = forward_tags;
  ota.region_tags = region_tags;
  std::uint64_t expiry = static_cast<std::uint64_t>(now.value) +
                         static_cast<std::uint64_t>(ttl_days) *
                             core::kIntervalsPerDay;
  ota.expiry.value = static_cast<std::uint32_t>(
      std::min<std::uint64_t>(expiry, 0xffffffffull));
  ota.used = false;

  journal({{"ev", "ota"}, {"ota", wire::to_json(ota)}});
  otas_[ota.token] = ota;
  return {Status::kOk, ota};
}

UploadReceipt Instance::upload_keys(
    const Bytes16& token, const std::vector<core::TemporaryExposureKey>& teks,
    core::IntervalNumber now) {
  std::unique_lock lock(mu_);

  auto it = otas_.find(token);
  if (it == otas_.end()) return {Status::kUnknownToken, 0, now};
  OneTimeAuthorization& ota = it->second;
  if (ota.used) return {Status::kTokenUsed, 0, now};
  if (now.value >= ota.expiry.value) return {Status::kTokenExpired, 0, now};

  if (teks.empty()) return {Status::kRangeViolation, 0, now};
  for (const core::TemporaryExposureKey& tek : teks) {
    if (!tek_well_formed(tek) ||
        tek.day_start.value < ota.first_day.value ||
        tek.day_start.value > ota.last_day.value)
      return {Status::kRangeViolation, 0, now};
  }

  // Point of no return: consume the token and append, one journal batch.
  journal({{"ev", "ota_used"},
           {"token", to_hex(token)},
           {"received_at", now.value}});
  ota.used = true;
  fulfilled_[token] = now;

  std::vector<ReplicatedKey> fresh;
  std::size_t accepted = 0;
  for (const core::TemporaryExposureKey& tek : teks) {
    core::DiagnosisKey key;
    key.tek = tek;
    key.report_type = ota.report_type;
    key.pha_id = ota.issuer;
    key.region_tags = ota.region_tags;
    key.upload_time = now;
    if (store_new_locked(key, token, now, id(), true)) {
      ++accepted;
      fresh.push_back({key, id(), records_.back().seq});
    }
  }

  if (!fresh.empty()) {
    for (const std::string& remote : ota.forward_tags) {
      PendingForward p;
      p.id = next_forward_id_++;
      p.remote = remote;
      p.records = fresh;
      nlohmann::json recs = nlohmann::json::array();
      for (const ReplicatedKey& r : p.records) recs.push_back(wire::to_json(r));
      journal({{"ev", "fwd_q"},
               {"id", p.id},
               {"remote", p.remote},
               {"records", recs}});
      pending_.push_back(std::move(p));
    }
  }
  return {Status::kOk, accepted, now};
}

Instance::UploadStatusResult Instance::check_upload_status(
    const std::string& pha_id, const Bytes16& signature,
    const Bytes16& token) const {
  std::shared_lock lock(mu_);

  auto pha = phas_.find(pha_id);
  if (pha == phas_.end()) return {Status::kAuthFailure, {}};
  std::string canonical = wire::canonical_status_request(id(), pha_id, token);
  if (!wire::verify(pha->second.public_key, canonical, signature))
    return {Status::kAuthFailure, {}};

  auto it = otas_.find(token);
  if (it == otas_.end()) return {Status::kUnknownToken, {}};
  if (it->second.issuer != pha_id) return {Status::kAuthFailure, {}};

  auto done = fulfilled_.find(token);
  if (done == fulfilled_.end()) return {Status::kOk, {false, {}}};
  return {Status::kOk, {true, done->second}};
}

Instance::DownloadPage Instance::download_locked(const DownloadFilter& filter,
                                                 std::uint64_t cursor,
                                                 std::size_t limit) const {
  DownloadPage page;
  page.next_cursor = cursor;
  for (std::uint64_t idx = cursor; idx < records_.size(); ++idx) {
    const KeyStoreRecord& rec = records_[idx];
    if (!filter_admits(filter, rec.diagnosis_key)) continue;
    page.batch.push_back({rec.diagnosis_key, rec.origin_instance, rec.seq});
    if (limit && page.batch.size() >= limit) break;
  }
  if (!page.batch.empty()) page.next_cursor = page.batch.back().seq;
  return page;
}

Instance::DownloadPage Instance::download_keys(const DownloadFilter& filter,
                                               std::uint64_t cursor,
                                               std::size_t limit) const {
  std::shared_lock lock(mu_);
  return download_locked(filter, cursor, limit);
}

std::size_t Instance::accept_forwarded(
    const std::vector<ReplicatedKey>& records, core::IntervalNumber now) {
  for (const ReplicatedKey& r : records) require_valid_replicated(r);

  std::unique_lock lock(mu_);
  std::size_t accepted = 0;
  for (const ReplicatedKey& r : records) {
    accepted += store_new_locked(r.diagnosis_key, Bytes16{}, now,
                                 r.origin_instance, true);
  }
  return accepted;
}

Instance::TransferResult Instance::forward_keys(Transport& transport,
                                                const std::string& remote,
                                                const DownloadFilter& filter,
                                                core::IntervalNumber now) const {
  DownloadPage snapshot;
  {
    std::shared_lock lock(mu_);
    snapshot = download_locked(filter, 0, 0);
  }
  std::optional<std::size_t> accepted =
      transport.forward(remote, snapshot.batch, now);
  if (!accepted) return {Status::kTransport, 0};
  return {Status::kOk, *accepted};
}

std::size_t Instance::pending_forward_count() const {
  std::shared_lock lock(mu_);
  return pending_.size();
}

Instance::TransferResult Instance::flush_forwards(Transport& transport,
                                                  core::IntervalNumber now) {
  std::vector<PendingForward> attempts;
  {
    std::shared_lock lock(mu_);
    attempts = pending_;
  }

  TransferResult result;
  std::vector<std::uint64_t> done;
  for (const PendingForward& p : attempts) {
    std::optional<std::size_t> accepted =
        transport.forward(p.remote, p.records, now);
    if (!accepted) {
      result.status = Status::kTransport;
      continue;
    }
    result.count += *accepted;
    done.push_back(p.id);
  }

  if (!done.empty()) {
    std::unique_lock lock(mu_);
    for (std::uint64_t id : done) {
      bool was_pending = std::erase_if(pending_, [id](const PendingForward& p) {
                           return p.id == id;
                         }) > 0;
      if (was_pending) journal({{"ev", "fwd_done"}, {"id", id}});
    }
  }
  return result;
}

Status Instance::add_subscription(const Subscription& sub) {
  if (!is_wire_safe_id(sub.remote_instance)) return Status::kRangeViolation;
  if (sub.filter.pha_ids && !all_wire_safe(*sub.filter.pha_ids))
    return Status::kRangeViolation;
  if (sub.filter.region_tags && !all_wire_safe(*sub.filter.region_tags))
    return Status::kRangeViolation;

  std::unique_lock lock(mu_);
  Subscription stored = sub;
  auto it = subs_.find(sub.remote_instance);
  if (it != subs_.end())
    stored.cursor = std::max(stored.cursor, it->second.cursor);
  journal({{"ev", "sub"}, {"sub", wire::to_json(stored)}});
  subs_[stored.remote_instance] = stored;
  return Status::kOk;
}

std::vector<Subscription> Instance::subscriptions() const {
  std::shared_lock lock(mu_);
  std::vector<Subscription> out;
  for (const auto& [remote, sub] : subs_) out.push_back(sub);
  return out;
}

Instance::TransferResult Instance::run_subscription(
    Transport& transport, const std::string& remote_instance,
    core::IntervalNumber now) {
  Subscription sub;
  {
    std::shared_lock lock(mu_);
    auto it = subs_.find(remote_instance);
    if (it == subs_.end()) return {Status::kRangeViolation, 0};
    sub = it->second;
  }

  TransferResult result;
  for (;;) {
    std::optional<Transport::Page> page =
        transport.download(remote_instance, sub.filter, sub.cursor,
                           kPullPageSize);
    if (!page) {
      result.status = Status::kTransport;
      return result;
    }
    if (page->batch.empty()) break;
    try {
      for (const ReplicatedKey& r : page->batch) require_valid_replicated(r);
    } catch (const std::invalid_argument&) {
      result.status = Status::kTransport;
      return result;
    }

    std::unique_lock lock(mu_);
    for (const ReplicatedKey& r : page->batch) {
      result.count += store_new_locked(r.diagnosis_key, Bytes16{}, now,
                                       r.origin_instance, true);
    }
    auto it = subs_.find(remote_instance);
    if (it != subs_.end() && page->next_cursor > it->second.cursor) {
      it->second.cursor = page->next_cursor;
      journal({{"ev", "sub_cursor"},
               {"remote", remote_instance},
               {"cursor", page->next_cursor}});
    }
    sub.cursor = page->next_cursor;
  }
  return result;
}

std::size_t Instance::record_count() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::uint64_t Instance::max_seq() const {
  std::shared_lock lock(mu_);
  return records_.empty() ? 0 : records_.back().seq;
}

std::vector<ReplicatedKey> Instance::all_records() const {
  std::shared_lock lock(mu_);
  std::vector<ReplicatedKey> out;
  out.reserve(records_.size());
  for (const KeyStoreRecord& rec : records_)
    out.push_back({rec.diagnosis_key, rec.origin_instance, rec.seq});
  return out;
}

void Instance::write_export(std::ostream& out) const {
  wire::write_export(out, all_records());
}

void LoopbackTransport::attach(Instance& instance) {
  instances_[instance.id()] = &instance;
}

void LoopbackTransport::set_unreachable(const std::string& remote,
                                        bool unreachable) {
  if (unreachable)
    unreachable_.insert(remote);
  else
    unreachable_.erase(remote);
}

std::optional<std::size_t> LoopbackTransport::forward(
    const std::string& remote, const std::vector<ReplicatedKey>& records,
    core::IntervalNumber now) {
  auto it = instances_.find(remote);
  if (it == instances_.end() || unreachable_.count(remote))
    return std::nullopt;
  return it->second->accept_forwarded(records, now);
}

std::optional<Transport::Page> LoopbackTransport::download(
    const std::string& remote, const DownloadFilter& filter,
    std::uint64_t cursor, std::size_t limit) {
  auto it = instances_.find(remote);
  if (it == instances_.end() || unreachable_.count(remote))
    return std::nullopt;
  Instance::DownloadPage page = it->second->download_keys(filter, cursor, limit);
  return Transport::Page{std::move(page.batch), page.next_cursor};
}

}  // namespace en::commons
