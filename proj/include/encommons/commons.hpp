#pragma once

// A single exchange instance: PHA registry, one-time-authorization lifecycle,
// the append-only diagnosis-key store, scoped downloads, and both replication
// modes (push to tagged peers, pull via subscriptions).
//
// All state-changing operations go through one exclusive lock; reads share
// it. Durability is an append-only JSON-lines journal replayed on startup.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "encommons/commons_types.hpp"
#include "encommons/commons_wire.hpp"
#include "encommons/rng.hpp"

namespace en::commons {

class Instance;

// How an instance reaches named remote instances. The loopback flavor wires
// instances together in-process (tests, simulation); the HTTP flavor lives in
// commons_http.hpp. Both return nullopt on transport failure.
class Transport {
 public:
  virtual ~Transport() = default;

  // Hands records to the remote for storage; returns how many it had not
  // seen before.
  virtual std::optional<std::size_t> forward(
      const std::string& remote, const std::vector<ReplicatedKey>& records,
      core::IntervalNumber now) = 0;

  struct Page {
    std::vector<ReplicatedKey> batch;
    std::uint64_t next_cursor = 0;
  };
  virtual std::optional<Page> download(const std::string& remote,
                                       const DownloadFilter& filter,
                                       std::uint64_t cursor,
                                       std::size_t limit) = 0;
};

struct InstanceConfig {
  std::string instance_id;
  std::string data_dir;      // empty → in-memory only (no journal)
  std::string admin_secret;  // credential for register_pha
  std::uint64_t seed = 0;    // token RNG; 0 → system entropy
};

class Instance {
 public:
  explicit Instance(InstanceConfig config);

  const std::string& id() const { return config_.instance_id; }

  // ---- registry ----

  Status register_pha(const PHARecord& record,
                      std::string_view admin_credential);
  std::optional<PHARecord> find_pha(const std::string& pha_id) const;
  std::vector<std::string> pha_ids() const;

  // ---- authorization lifecycle ----

  struct IssueResult {
    Status status = Status::kOk;
    OneTimeAuthorization ota;  // meaningful when status == kOk
  };
  // `signature` is wire::sign(pha_key, wire::canonical_issue_request(...)).
  IssueResult issue_ota(const std::string& pha_id, const Bytes16& signature,
                        core::ReportType report_type,
                        core::IntervalNumber first_day,
                        core::IntervalNumber last_day,
                        const std::set<std::string>& forward_tags,
                        const std::set<std::string>& region_tags,
                        std::uint32_t ttl_days, core::IntervalNumber now);

  // All-or-nothing: any out-of-range or malformed key rejects the whole
  // upload and leaves the token unused. Success consumes the token even if
  // every key was already present.
  UploadReceipt upload_keys(const Bytes16& token,
                            const std::vector<core::TemporaryExposureKey>& teks,
                            core::IntervalNumber now);

  struct UploadStatusResult {
    Status status = Status::kOk;
    UploadStatus upload;
  };
  // Only the issuing PHA may ask; `signature` covers
  // wire::canonical_status_request(...).
  UploadStatusResult check_upload_status(const std::string& pha_id,
                                         const Bytes16& signature,
                                         const Bytes16& token) const;

  // ---- store access ----

  struct DownloadPage {
    std::vector<ReplicatedKey> batch;
    std::uint64_t next_cursor = 0;
  };
  // Public, unauthenticated. Returns records with seq > cursor admitted by
  // the filter, in append order, at most `limit` of them (0 = no cap).
  DownloadPage download_keys(const DownloadFilter& filter,
                             std::uint64_t cursor,
                             std::size_t limit = 0) const;

  // Receiver side of replication. Dedup on (key material, day start) — a
  // rejected duplicate is not an error. Returns how many were new. Throws
  // std::invalid_argument on malformed records.
  std::size_t accept_forwarded(const std::vector<ReplicatedKey>& records,
                               core::IntervalNumber now);

  struct TransferResult {
    Status status = Status::kOk;
    std::size_t count = 0;  // records newly accepted remotely / pulled
  };
  // Sender side: push every local record the filter admits to the remote.
  TransferResult forward_keys(Transport& transport, const std::string& remote,
                              const DownloadFilter& filter,
                              core::IntervalNumber now) const;

  // ---- push replication queued by upload forward_tags ----

  std::size_t pending_forward_count() const;
  // Attempts every queued push; entries survive transport failure for retry.
  TransferResult flush_forwards(Transport& transport,
                                core::IntervalNumber now);

  // ---- pull replication ----

  // Registers (or replaces) the subscription for its remote_instance.
  Status add_subscription(const Subscription& sub);
  std::vector<Subscription> subscriptions() const;
  // Pages from the remote's cursor position, stores unseen records, and
  // advances the cursor; a failed page leaves the cursor where it was.
  TransferResult run_subscription(Transport& transport,
                                  const std::string& remote_instance,
                                  core::IntervalNumber now);

  // ---- introspection / export ----

  std::size_t record_count() const;
  std::uint64_t max_seq() const;
  // Store snapshot in append order (download view: no tokens).
  std::vector<ReplicatedKey> all_records() const;
  void write_export(std::ostream& out) const;

 private:
  struct PendingForward {
    std::uint64_t id = 0;
    std::string remote;
    std::vector<ReplicatedKey> records;
  };

  // Callers hold the exclusive lock.
  void journal(const nlohmann::json& event);
  void replay_journal();
  void apply_event(const nlohmann::json& event);
  std::size_t store_new_locked(const core::DiagnosisKey& key,
                               const Bytes16& ota_token,
                               core::IntervalNumber received_at,
                               const std::string& origin, bool write_journal);
  DownloadPage download_locked(const DownloadFilter& filter,
                               std::uint64_t cursor, std::size_t limit) const;

  InstanceConfig config_;
  mutable std::shared_mutex mu_;
  Rng rng_;

  std::map<std::string, PHARecord> phas_;
  std::map<Bytes16, OneTimeAuthorization> otas_;
  std::map<Bytes16, core::IntervalNumber> fulfilled_;  // token → received_at
  std::vector<KeyStoreRecord> records_;                // append-only; seq = idx+1
  std::set<std::pair<Bytes16, std::uint32_t>> seen_;   // dedup index
  std::vector<PendingForward> pending_;
  std::uint64_t next_forward_id_ = 1;
  std::map<std::string, Subscription> subs_;

  std::ofstream journal_out_;
};

// In-process transport for tests and simulation: names resolve to attached
// instances, calls are direct. Optionally drops traffic to a named remote to
// exercise failure paths.
class LoopbackTransport : public Transport {
 public:
  void attach(Instance& instance);
  void set_unreachable(const std::string& remote, bool unreachable);

  std::optional<std::size_t> forward(const std::string& remote,
                                     const std::vector<ReplicatedKey>& records,
                                     core::IntervalNumber now) override;
  std::optional<Page> download(const std::string& remote,
                               const DownloadFilter& filter,
                               std::uint64_t cursor,
                               std::size_t limit) override;

 private:
  std::map<std::string, Instance*> instances_;
  std::set<std::string> unreachable_;
};

}  // namespace en::commons
