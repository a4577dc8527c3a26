#include <doctest.h>

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>

#include "encommons/commons.hpp"
#include "encommons/commons_http.hpp"
#include "encommons/rng.hpp"

using namespace en;
using namespace en::commons;

namespace {

// (key material hex, day start) set — the identity the stores deduplicate on.
std::set<std::pair<std::string, std::uint32_t>> key_set(const Instance& inst) {
  std::set<std::pair<std::string, std::uint32_t>> out;
  for (const ReplicatedKey& r : inst.all_records())
    out.insert({to_hex(r.diagnosis_key.tek.key_material),
                r.diagnosis_key.tek.day_start.value});
  return out;
}

struct Pha {
  std::string id = "pha-fed";
  Bytes16 key;
  Pha() {
    Rng rng(4242);
    key = rng.next_bytes16();
  }
  PHARecord record() const {
    PHARecord r;
    r.pha_id = id;
    r.public_key = key;
    r.display_name = "Federation Test Authority";
    r.region_tags = {"fed"};
    return r;
  }
};

Bytes16 issue_and_upload(Instance& inst, const Pha& pha,
                         const std::vector<core::TemporaryExposureKey>& teks,
                         std::set<std::string> forward_tags = {}) {
  std::uint32_t lo = 0xffffffffu, hi = 0;
  for (const auto& tek : teks) {
    lo = std::min(lo, tek.day_start.value);
    hi = std::max(hi, tek.day_start.value);
  }
  Bytes16 sig = wire::sign(
      pha.key, wire::canonical_issue_request(
                   inst.id(), pha.id, core::ReportType::kConfirmed,
                   core::IntervalNumber{lo}, core::IntervalNumber{hi},
                   forward_tags, {"fed"}, 1));
  auto issued = inst.issue_ota(pha.id, sig, core::ReportType::kConfirmed,
                               core::IntervalNumber{lo},
                               core::IntervalNumber{hi}, forward_tags,
                               {"fed"}, 1, core::IntervalNumber{0});
  REQUIRE(issued.status == Status::kOk);
  auto receipt =
      inst.upload_keys(issued.ota.token, teks, core::IntervalNumber{1});
  REQUIRE(receipt.status == Status::kOk);
  REQUIRE(receipt.accepted == teks.size());
  return issued.ota.token;
}

std::vector<core::TemporaryExposureKey> fresh_teks(Rng& rng, int n) {
  std::vector<core::TemporaryExposureKey> out;
  for (int i = 0; i < n; ++i)
    out.push_back(core::generate_tek(
        rng, core::IntervalNumber{static_cast<std::uint32_t>(i) * 96}));
  return out;
}

}  // namespace

TEST_CASE("keys relay A to B to C with origin intact") {
  Instance a({"exch-a", "", "sa", 21});
  Instance b({"exch-b", "", "sb", 22});
  Instance c({"exch-c", "", "sc", 23});
  LoopbackTransport net;
  net.attach(a);
  net.attach(b);
  net.attach(c);

  Pha pha;
  REQUIRE(a.register_pha(pha.record(), "sa") == Status::kOk);

  Rng rng(31);
  auto teks = fresh_teks(rng, 4);
  // upload into A with a push tag for B
  issue_and_upload(a, pha, teks, {"exch-b"});
  REQUIRE(a.pending_forward_count() == 1);
  auto pushed = a.flush_forwards(net, core::IntervalNumber{2});
  CHECK(pushed.status == Status::kOk);
  CHECK(pushed.count == 4);
  CHECK(a.pending_forward_count() == 0);

  // C pulls everything B has
  Subscription sub;
  sub.remote_instance = "exch-b";
  REQUIRE(c.add_subscription(sub) == Status::kOk);
  auto pulled = c.run_subscription(net, "exch-b", core::IntervalNumber{3});
  CHECK(pulled.status == Status::kOk);
  CHECK(pulled.count == 4);

  // all three stores agree on the key set
  CHECK(key_set(a) == key_set(b));
  CHECK(key_set(b) == key_set(c));

  // provenance survives the double hop; sequence numbers are local
  for (const Instance* inst : {&a, &b, &c}) {
    auto records = inst->all_records();
    REQUIRE(records.size() == 4);
    for (std::size_t i = 0; i < records.size(); ++i) {
      CHECK(records[i].origin_instance == "exch-a");
      CHECK(records[i].seq == i + 1);
      CHECK(records[i].diagnosis_key.pha_id == "pha-fed");
      CHECK(records[i].diagnosis_key.region_tags ==
            std::set<std::string>{"fed"});
    }
  }

  // replaying both legs moves nothing
  auto repush = a.forward_keys(net, "exch-b", {}, core::IntervalNumber{4});
  CHECK(repush.status == Status::kOk);
  CHECK(repush.count == 0);
  auto repull = c.run_subscription(net, "exch-b", core::IntervalNumber{5});
  CHECK(repull.status == Status::kOk);
  CHECK(repull.count == 0);
  CHECK(c.record_count() == 4);
}

TEST_CASE("pull cursors only move on successful pages") {
  Instance a({"exch-a", "", "sa", 24});
  Instance b({"exch-b", "", "sb", 25});
  LoopbackTransport net;
  net.attach(a);
  net.attach(b);

  Pha pha;
  REQUIRE(b.register_pha(pha.record(), "sb") == Status::kOk);
  Rng rng(32);
  issue_and_upload(b, pha, fresh_teks(rng, 3));

  Subscription sub;
  sub.remote_instance = "exch-b";
  REQUIRE(a.add_subscription(sub) == Status::kOk);

  net.set_unreachable("exch-b", true);
  CHECK(a.run_subscription(net, "exch-b", core::IntervalNumber{1}).status ==
        Status::kTransport);
  CHECK(a.subscriptions()[0].cursor == 0);
  CHECK(a.record_count() == 0);

  net.set_unreachable("exch-b", false);
  auto pulled = a.run_subscription(net, "exch-b", core::IntervalNumber{2});
  CHECK(pulled.status == Status::kOk);
  CHECK(pulled.count == 3);
  CHECK(a.subscriptions()[0].cursor == 3);

  // new material on the remote resumes from the cursor
  issue_and_upload(b, pha, fresh_teks(rng, 2));
  auto more = a.run_subscription(net, "exch-b", core::IntervalNumber{3});
  CHECK(more.status == Status::kOk);
  CHECK(more.count == 2);
  CHECK(a.subscriptions()[0].cursor == 5);
  CHECK(key_set(a) == key_set(b));
}

TEST_CASE("two-way subscriptions converge without echo") {
  Instance a({"exch-a", "", "sa", 26});
  Instance b({"exch-b", "", "sb", 27});
  LoopbackTransport net;
  net.attach(a);
  net.attach(b);

  Pha pha;
  REQUIRE(a.register_pha(pha.record(), "sa") == Status::kOk);
  REQUIRE(b.register_pha(pha.record(), "sb") == Status::kOk);

  Rng rng(33);
  issue_and_upload(a, pha, fresh_teks(rng, 3));
  issue_and_upload(b, pha, fresh_teks(rng, 2));

  Subscription ab;
  ab.remote_instance = "exch-b";
  REQUIRE(a.add_subscription(ab) == Status::kOk);
  Subscription ba;
  ba.remote_instance = "exch-a";
  REQUIRE(b.add_subscription(ba) == Status::kOk);

  CHECK(a.run_subscription(net, "exch-b", core::IntervalNumber{1}).count == 2);
  CHECK(b.run_subscription(net, "exch-a", core::IntervalNumber{1}).count == 3);
  CHECK(key_set(a) == key_set(b));
  CHECK(a.record_count() == 5);

  // the next round trips nothing back and forth
  CHECK(a.run_subscription(net, "exch-b", core::IntervalNumber{2}).count == 0);
  CHECK(b.run_subscription(net, "exch-a", core::IntervalNumber{2}).count == 0);
  CHECK(a.record_count() == 5);
  CHECK(b.record_count() == 5);
}

TEST_CASE("http endpoints mirror the library operations") {
  Instance served({"exch-http", "", "admin-http", 28});
  http::Server server(served);
  int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::string base = "http://127.0.0.1:" + std::to_string(port);
  http::Client client(base);

  auto info = client.info();
  REQUIRE(info.has_value());
  CHECK(info->instance_id == "exch-http");
  CHECK(info->record_count == 0);

  Pha pha;
  CHECK(client.register_pha(pha.record(), "wrong") == Status::kAuthFailure);
  CHECK(client.register_pha(pha.record(), "admin-http") == Status::kOk);

  Bytes16 sig = wire::sign(
      pha.key, wire::canonical_issue_request(
                   "exch-http", pha.id, core::ReportType::kConfirmed,
                   core::IntervalNumber{0}, core::IntervalNumber{96}, {},
                   {"fed"}, 2));
  auto issued = client.issue_ota(pha.id, sig, core::ReportType::kConfirmed,
                                 core::IntervalNumber{0},
                                 core::IntervalNumber{96}, {}, {"fed"}, 2,
                                 core::IntervalNumber{100});
  REQUIRE(issued.status == Status::kOk);
  CHECK(issued.ota.expiry.value == 100 + 2 * 96);

  Rng rng(34);
  auto teks = fresh_teks(rng, 2);
  auto receipt = client.upload_keys(issued.ota.token, teks,
                                    core::IntervalNumber{120});
  REQUIRE(receipt.status == Status::kOk);
  CHECK(receipt.accepted == 2);
  // the pinned clock is what the store stamps
  CHECK(receipt.received_at.value == 120);

  Bytes16 status_sig =
      wire::sign(pha.key, wire::canonical_status_request("exch-http", pha.id,
                                                         issued.ota.token));
  auto status = client.check_upload_status(pha.id, status_sig,
                                           issued.ota.token);
  REQUIRE(status.status == Status::kOk);
  CHECK(status.upload.fulfilled);
  CHECK(status.upload.received_at.value == 120);

  auto everything = client.download_keys({}, 0);
  REQUIRE(everything.status == Status::kOk);
  REQUIRE(everything.batch.size() == 2);
  CHECK(everything.next_cursor == 2);
  CHECK(everything.batch[0].origin_instance == "exch-http");
  CHECK(everything.batch[0].diagnosis_key.upload_time.value == 120);

  DownloadFilter nothing;
  nothing.pha_ids = std::set<std::string>{"pha-nobody"};
  CHECK(client.download_keys(nothing, 0).batch.empty());

  // reusing the token over HTTP reports the protocol status, not transport
  CHECK(client.upload_keys(issued.ota.token, teks).status ==
        Status::kTokenUsed);

  // malformed request bodies come back as range violations, still HTTP 200
  httplib::Client raw(base);
  auto res = raw.Post("/v1/upload_keys", "this is not json",
                      "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body.find("\"status\":5") != std::string::npos);

  server.stop();
  // with the server gone, everything degrades to transport failures
  CHECK_FALSE(client.info().has_value());
  CHECK(client.download_keys({}, 0).status == Status::kTransport);
  CHECK(client.upload_keys(issued.ota.token, teks).status ==
        Status::kTransport);
}

TEST_CASE("replication runs over http transports") {
  Instance a({"exch-a", "", "sa", 29});
  Instance b({"exch-b", "", "sb", 30});
  http::Server server_a(a);
  http::Server server_b(b);
  int port_a = server_a.start("127.0.0.1", 0);
  int port_b = server_b.start("127.0.0.1", 0);
  REQUIRE(port_a > 0);
  REQUIRE(port_b > 0);

  http::HttpTransport net;
  net.add_peer("exch-a", "http://127.0.0.1:" + std::to_string(port_a));
  net.add_peer("exch-b", "http://127.0.0.1:" + std::to_string(port_b));

  Pha pha;
  REQUIRE(a.register_pha(pha.record(), "sa") == Status::kOk);
  Rng rng(35);
  issue_and_upload(a, pha, fresh_teks(rng, 3), {"exch-b"});

  // queued push goes out over the wire
  auto pushed = a.flush_forwards(net, core::IntervalNumber{2});
  CHECK(pushed.status == Status::kOk);
  CHECK(pushed.count == 3);
  CHECK(b.record_count() == 3);
  CHECK(key_set(a) == key_set(b));
  for (const ReplicatedKey& r : b.all_records())
    CHECK(r.origin_instance == "exch-a");

  // pull the other way: a subscribes to b and sees nothing new
  Subscription sub;
  sub.remote_instance = "exch-b";
  REQUIRE(a.add_subscription(sub) == Status::kOk);
  auto pulled = a.run_subscription(net, "exch-b", core::IntervalNumber{3});
  CHECK(pulled.status == Status::kOk);
  CHECK(pulled.count == 0);
  CHECK(a.subscriptions()[0].cursor == 3);

  // unknown peer name → transport failure
  CHECK(a.forward_keys(net, "exch-zz", {}, core::IntervalNumber{4}).status ==
        Status::kTransport);

  server_b.stop();
  auto offline = a.forward_keys(net, "exch-b", {}, core::IntervalNumber{5});
  CHECK(offline.status == Status::kTransport);
  server_a.stop();
}
