// Single-binary toolkit: key generation and derivation, offline matching,
// the exchange service and its client operations, federation, simulation,
// receipt checking, and the bandwidth estimator.
//
// Exit codes: 0 success; 1–6 mirror the protocol status codes
// (auth failure, unknown token, token used, token expired, range violation,
// transport failure); 64 for local usage errors (bad flags, unreadable
// files, malformed hex).

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "encommons/bytes.hpp"
#include "encommons/commons.hpp"
#include "encommons/commons_http.hpp"
#include "encommons/commons_wire.hpp"
#include "encommons/core.hpp"
#include "encommons/device.hpp"
#include "encommons/rng.hpp"
#include "encommons/sim.hpp"

namespace {

namespace core = en::core;
namespace commons = en::commons;
namespace device = en::device;
namespace sim = en::sim;
namespace wire = en::commons::wire;
namespace http = en::commons::http;
using en::Bytes16;

constexpr int kUsageError = 64;

struct Fail : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, ',')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

std::set<std::string> csv_set(const std::string& text) {
  auto v = split_csv(text);
  return {v.begin(), v.end()};
}

Bytes16 hex16(const std::string& hex, const char* what) {
  try {
    return en::bytes16_from_hex(hex);
  } catch (const std::exception&) {
    throw Fail(std::string(what) + ": expected 32 hex characters");
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Fail("cannot open " + path);
  return in;
}

// --day style flags count whole days; the protocol indexes 900 s intervals.
core::IntervalNumber day_to_interval(std::uint32_t day) {
  if (day > 0xffffffffu / core::kIntervalsPerDay)
    throw Fail("day number out of range");
  return core::IntervalNumber{day * core::kIntervalsPerDay};
}

// EN_COMMONS_DATA overrides any --data-dir value.
std::string resolve_data_dir(const std::string& flag_value) {
  const char* env = std::getenv("EN_COMMONS_DATA");
  if (env && *env) return env;
  return flag_value;
}

core::ExposurePolicy policy_from_file(const std::string& path) {
  std::ifstream in = open_input(path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Fail("policy file is not valid JSON: " + path);
  core::ExposurePolicy policy;
  policy.max_attenuation_db = j.value("max_attenuation_db", policy.max_attenuation_db);
  policy.min_total_duration_s = j.value("min_total_duration_s", policy.min_total_duration_s);
  policy.weight_confirmed = j.value("weight_confirmed", policy.weight_confirmed);
  policy.weight_probable = j.value("weight_probable", policy.weight_probable);
  core::validate(policy);
  return policy;
}

std::vector<commons::ReplicatedKey> records_from_export_file(
    const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return wire::read_export(in);
  } catch (const std::exception& e) {
    throw Fail(path + ": " + e.what());
  }
}

std::vector<core::DiagnosisKey> keys_from_export_file(const std::string& path) {
  std::vector<core::DiagnosisKey> keys;
  for (const commons::ReplicatedKey& r : records_from_export_file(path))
    keys.push_back(r.diagnosis_key);
  return keys;
}

// Observation log: one beacon per line,
//   rpi_hex,interval,attenuation_db,duration_s
// with '#' comments and blank lines ignored.
std::vector<core::ObservedBeacon> read_observation_log(std::istream& in) {
  std::vector<core::ObservedBeacon> log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    char hex[33] = {};
    unsigned interval = 0;
    double attenuation = 0, duration = 0;
    if (std::sscanf(line.c_str(), "%32[0-9a-fA-F],%u,%lf,%lf", hex, &interval,
                    &attenuation, &duration) != 4 ||
        std::strlen(hex) != 32) {
      throw Fail("observation log line " + std::to_string(lineno) +
                 ": expected rpi_hex,interval,attenuation_db,duration_s");
    }
    log.push_back({core::RollingProximityIdentifier{en::bytes16_from_hex(hex)},
                   core::IntervalNumber{interval}, attenuation, duration});
  }
  return log;
}

struct RemotePeer {
  std::string name;
  std::string url;
};

// --remote for federation subcommands: NAME=URL; plain URLs get a default
// peer name.
RemotePeer parse_peer(const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos) return {"remote", spec};
  RemotePeer peer{spec.substr(0, eq), spec.substr(eq + 1)};
  if (peer.name.empty() || peer.url.empty())
    throw Fail("--remote expects URL or NAME=URL");
  return peer;
}

std::pair<std::string, int> parse_listen(const std::string& spec) {
  auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon + 1 == spec.size())
    throw Fail("--listen expects HOST:PORT");
  int port = 0;
  try {
    port = std::stoi(spec.substr(colon + 1));
  } catch (const std::exception&) {
    throw Fail("--listen expects HOST:PORT");
  }
  if (port < 0 || port > 65535) throw Fail("--listen port out of range");
  return {spec.substr(0, colon), port};
}

std::string status_line(commons::Status status) {
  return "status=" + std::string(commons::to_string(status));
}

int status_exit(commons::Status status) { return static_cast<int>(status); }

core::ReportType parse_report_type(const std::string& text) {
  auto rt = core::report_type_from_string(text);
  if (!rt) throw Fail("unknown report type: " + text);
  return *rt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exposure-notification toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  // Shared option storage; exactly one leaf subcommand parses per run.
  std::uint64_t seed = 0;
  std::uint32_t day = 0, first_day = 0, last_day = 0, ttl_days = 1;
  std::uint32_t since_interval = 0, now_interval = 0, trials = 5;
  std::uint64_t cursor = 0, limit = 0;
  std::string data_dir, config_path, tek_hex, key_hex, token_hex, pha_id;
  std::string remote, keys_path, log_path, policy_path, out_path, code;
  std::string instance_id, admin_secret, display_name;
  std::string regions_csv, forward_csv, pha_csv, report_csv;
  std::string report_type_name = "confirmed";
  std::string listen_spec = "127.0.0.1:8437";
  std::string participations_csv = "0.2,0.4,0.8";
  std::uint64_t est_diagnoses = 0, est_teks = 0, est_bytes = 16;
  double est_overhead = 1.0;
  bool flush_queued = false, no_run = false;

  // ---- keygen ----
  CLI::App* keygen = app.add_subcommand("keygen", "generate a daily key");
  keygen->add_option("--seed", seed, "deterministic RNG seed");
  keygen->add_option("--day", day, "day number the key covers (default 0)");
  keygen->callback([&] {
    en::Rng rng = keygen->count("--seed") ? en::Rng(seed)
                                          : en::Rng::from_system_entropy();
    core::TemporaryExposureKey tek =
        core::generate_tek(rng, day_to_interval(day));
    std::cout << en::to_hex(tek.key_material) << "\n";
  });

  // ---- derive ----
  CLI::App* derive =
      app.add_subcommand("derive", "print a key's 96 broadcast identifiers");
  derive->add_option("--tek", tek_hex, "key material, 32 hex chars")
      ->required();
  derive->add_option("--day", day, "day number the key covers (default 0)");
  derive->callback([&] {
    core::TemporaryExposureKey tek{hex16(tek_hex, "--tek"),
                                   day_to_interval(day),
                                   core::kIntervalsPerDay};
    std::vector<core::RollingProximityIdentifier> rpis =
        core::derive_rpi_sequence(tek);
    for (std::size_t i = 0; i < rpis.size(); ++i) {
      std::cout << tek.day_start.value + i << "," << en::to_hex(rpis[i].bytes)
                << "\n";
    }
  });

  // ---- match ----
  CLI::App* match = app.add_subcommand(
      "match", "match an observation log against exported keys");
  match->add_option("--keys", keys_path, "key export file")->required();
  match->add_option("--log", log_path, "observation log file")->required();
  match->add_option("--policy", policy_path, "policy JSON file");
  match->callback([&] {
    std::vector<core::DiagnosisKey> keys = keys_from_export_file(keys_path);
    std::ifstream log_in = open_input(log_path);
    std::vector<core::ObservedBeacon> log = read_observation_log(log_in);
    core::ExposurePolicy policy = policy_path.empty()
                                      ? core::ExposurePolicy{}
                                      : policy_from_file(policy_path);
    std::vector<core::ExposureMatch> matches =
        core::match_exposures(keys, log, policy);
    for (const core::ExposureMatch& m : matches) {
      std::string intervals;
      for (core::IntervalNumber iv : m.matched_intervals) {
        if (!intervals.empty()) intervals += ";";
        intervals += std::to_string(iv.value);
      }
      std::cout << "match tek=" << en::to_hex(m.key.tek.key_material)
                << " day_start=" << m.key.tek.day_start.value
                << " report=" << core::to_string(m.key.report_type)
                << " total_duration_s=" << fmt_g(m.total_duration_s)
                << " min_attenuation_db=" << fmt_g(m.min_attenuation_db)
                << " intervals=" << intervals << "\n";
    }
    std::cout << "risk " << fmt_g(core::score_risk(matches, policy).value)
              << "\n";
  });

  // ---- receipt ----
  CLI::App* receipt =
      app.add_subcommand("receipt", "decode or check printed receipt codes");
  receipt->require_subcommand(1);
  CLI::App* receipt_decode =
      receipt->add_subcommand("decode", "show a code's contents");
  receipt_decode->add_option("--code", code, "receipt code")->required();
  receipt_decode->callback([&] {
    device::ReceiptContents contents;
    try {
      contents = device::decode_receipt_code(device::ReceiptCode{code});
    } catch (const std::exception& e) {
      throw Fail(e.what());
    }
    std::cout << "rpi_prefix=" << en::to_hex(contents.rpi_prefix)
              << " interval=" << contents.interval.value << "\n";
  });
  CLI::App* receipt_check = receipt->add_subcommand(
      "check", "test a code against exported diagnosis keys");
  receipt_check->add_option("--code", code, "receipt code")->required();
  receipt_check->add_option("--keys", keys_path, "key export file")
      ->required();
  receipt_check->callback([&] {
    std::vector<core::DiagnosisKey> keys = keys_from_export_file(keys_path);
    bool hit = false;
    try {
      hit = device::check_receipt_code(device::ReceiptCode{code}, keys);
    } catch (const std::exception& e) {
      throw Fail(e.what());
    }
    std::cout << (hit ? "hit" : "miss") << "\n";
    if (!hit) rc = 2;  // mirrors "unknown token": nothing matched
  });

  // ---- commons ----
  CLI::App* commons_cmd =
      app.add_subcommand("commons", "exchange service and client operations");
  commons_cmd->require_subcommand(1);

  CLI::App* serve = commons_cmd->add_subcommand("serve", "host an instance");
  serve->add_option("--data-dir", data_dir, "journal directory (EN_COMMONS_DATA overrides)");
  serve->add_option("--id", instance_id, "instance identifier")->required();
  serve->add_option("--listen", listen_spec, "HOST:PORT (default 127.0.0.1:8437)");
  serve->add_option("--admin", admin_secret, "registration credential");
  serve->add_option("--seed", seed, "token RNG seed (default: system entropy)");
  serve->callback([&] {
    commons::InstanceConfig config;
    config.instance_id = instance_id;
    config.data_dir = resolve_data_dir(data_dir);
    config.admin_secret = admin_secret;
    config.seed = serve->count("--seed") ? seed : 0;
    commons::Instance instance(config);
    auto [host, port] = parse_listen(listen_spec);
    http::Server server(instance);
    std::cout << "instance=" << instance.id() << " listening=" << host << ":"
              << port << std::endl;
    if (!server.listen_blocking(host, port))
      throw Fail("cannot listen on " + listen_spec);
  });

  CLI::App* reg = commons_cmd->add_subcommand(
      "register", "register a health authority (admin)");
  reg->add_option("--remote", remote, "instance base URL")->required();
  reg->add_option("--pha", pha_id, "authority identifier")->required();
  reg->add_option("--key", key_hex, "authority verification key, 32 hex chars")
      ->required();
  reg->add_option("--name", display_name, "display name");
  reg->add_option("--regions", regions_csv, "region tags, comma-separated");
  reg->add_option("--admin", admin_secret, "registration credential")
      ->required();
  reg->callback([&] {
    commons::PHARecord record;
    record.pha_id = pha_id;
    record.public_key = hex16(key_hex, "--key");
    record.display_name = display_name;
    record.region_tags = csv_set(regions_csv);
    http::Client client(parse_peer(remote).url);
    commons::Status status = client.register_pha(record, admin_secret);
    std::cout << status_line(status) << "\n";
    rc = status_exit(status);
  });

  CLI::App* issue = commons_cmd->add_subcommand(
      "issue", "issue a one-time upload authorization (as a PHA)");
  issue->add_option("--remote", remote, "instance base URL")->required();
  issue->add_option("--pha", pha_id, "authority identifier")->required();
  issue->add_option("--key", key_hex, "authority signing key, 32 hex chars")
      ->required();
  issue->add_option("--report", report_type_name,
                    "confirmed|probable (default confirmed)");
  issue->add_option("--first-day", first_day, "first day number covered")
      ->required();
  issue->add_option("--last-day", last_day, "last day number covered")
      ->required();
  issue->add_option("--forward", forward_csv,
                    "forward to remote instances, comma-separated");
  issue->add_option("--regions", regions_csv, "region tags, comma-separated");
  issue->add_option("--ttl", ttl_days, "authorization lifetime in days");
  issue->add_option("--now", now_interval, "pin the instance clock (interval)");
  issue->callback([&] {
    core::ReportType rt = parse_report_type(report_type_name);
    core::IntervalNumber first = day_to_interval(first_day);
    core::IntervalNumber last = day_to_interval(last_day);
    std::set<std::string> forward_tags = csv_set(forward_csv);
    std::set<std::string> region_tags = csv_set(regions_csv);
    http::Client client(parse_peer(remote).url);
    auto info = client.info();
    if (!info) {
      std::cout << status_line(commons::Status::kTransport) << "\n";
      rc = status_exit(commons::Status::kTransport);
      return;
    }
    Bytes16 signature = wire::sign(
        hex16(key_hex, "--key"),
        wire::canonical_issue_request(info->instance_id, pha_id, rt, first,
                                      last, forward_tags, region_tags,
                                      ttl_days));
    std::optional<core::IntervalNumber> now;
    if (issue->count("--now")) now = core::IntervalNumber{now_interval};
    commons::Instance::IssueResult result =
        client.issue_ota(pha_id, signature, rt, first, last, forward_tags,
                         region_tags, ttl_days, now);
    std::cout << status_line(result.status) << "\n";
    if (result.status == commons::Status::kOk) {
      std::cout << "token=" << en::to_hex(result.ota.token) << "\n"
                << "expiry=" << result.ota.expiry.value << "\n";
    }
    rc = status_exit(result.status);
  });

  CLI::App* upload = commons_cmd->add_subcommand(
      "upload", "upload diagnosis keys under an authorization");
  upload->add_option("--remote", remote, "instance base URL")->required();
  upload->add_option("--token", token_hex, "authorization token, 32 hex chars")
      ->required();
  upload->add_option("--tek", tek_hex, "single key material, 32 hex chars");
  upload->add_option("--day", day, "day number for --tek (default 0)");
  upload->add_option("--keys", keys_path, "key export file to upload");
  upload->add_option("--now", now_interval, "pin the instance clock (interval)");
  upload->callback([&] {
    std::vector<core::TemporaryExposureKey> teks;
    if (!tek_hex.empty()) {
      teks.push_back({hex16(tek_hex, "--tek"), day_to_interval(day),
                      core::kIntervalsPerDay});
    }
    if (!keys_path.empty()) {
      for (const core::DiagnosisKey& k : keys_from_export_file(keys_path))
        teks.push_back(k.tek);
    }
    if (teks.empty()) throw Fail("upload needs --tek or --keys");
    std::optional<core::IntervalNumber> now;
    if (upload->count("--now")) now = core::IntervalNumber{now_interval};
    http::Client client(parse_peer(remote).url);
    commons::UploadReceipt receipt =
        client.upload_keys(hex16(token_hex, "--token"), teks, now);
    std::cout << status_line(receipt.status) << "\n";
    if (receipt.status == commons::Status::kOk) {
      std::cout << "accepted=" << receipt.accepted << "\n"
                << "received_at=" << receipt.received_at.value << "\n";
    }
    rc = status_exit(receipt.status);
  });

  CLI::App* status_cmd = commons_cmd->add_subcommand(
      "status", "ask whether an authorization was used (as its issuer)");
  status_cmd->add_option("--remote", remote, "instance base URL")->required();
  status_cmd->add_option("--pha", pha_id, "authority identifier")->required();
  status_cmd
      ->add_option("--key", key_hex, "authority signing key, 32 hex chars")
      ->required();
  status_cmd
      ->add_option("--token", token_hex, "authorization token, 32 hex chars")
      ->required();
  status_cmd->callback([&] {
    http::Client client(parse_peer(remote).url);
    auto info = client.info();
    if (!info) {
      std::cout << status_line(commons::Status::kTransport) << "\n";
      rc = status_exit(commons::Status::kTransport);
      return;
    }
    Bytes16 token = hex16(token_hex, "--token");
    Bytes16 signature = wire::sign(
        hex16(key_hex, "--key"),
        wire::canonical_status_request(info->instance_id, pha_id, token));
    commons::Instance::UploadStatusResult result =
        client.check_upload_status(pha_id, signature, token);
    std::cout << status_line(result.status) << "\n";
    if (result.status == commons::Status::kOk) {
      std::cout << "fulfilled=" << (result.upload.fulfilled ? "true" : "false")
                << "\n";
      if (result.upload.fulfilled)
        std::cout << "received_at=" << result.upload.received_at.value << "\n";
    }
    rc = status_exit(result.status);
  });

  auto add_filter_flags = [&](CLI::App* cmd) {
    cmd->add_option("--since", since_interval,
                    "only keys whose day starts at or after this interval");
    cmd->add_option("--pha", pha_csv, "only these authorities, comma-separated");
    cmd->add_option("--regions", regions_csv,
                    "only keys tagged with one of these regions");
    cmd->add_option("--report", report_csv,
                    "only these report types, comma-separated");
  };
  auto filter_from_flags = [&](CLI::App* cmd) {
    commons::DownloadFilter filter;
    if (cmd->count("--since"))
      filter.since = core::IntervalNumber{since_interval};
    if (cmd->count("--pha")) filter.pha_ids = csv_set(pha_csv);
    if (cmd->count("--regions")) filter.region_tags = csv_set(regions_csv);
    if (cmd->count("--report")) {
      std::set<core::ReportType> kinds;
      for (const std::string& name : split_csv(report_csv))
        kinds.insert(parse_report_type(name));
      filter.report_types = kinds;
    }
    return filter;
  };

  CLI::App* download = commons_cmd->add_subcommand(
      "download", "download keys into the export file format");
  download->add_option("--remote", remote, "instance base URL")->required();
  add_filter_flags(download);
  download->add_option("--cursor", cursor, "resume after this sequence number");
  download->add_option("--limit", limit, "page size (0 = everything)");
  download->add_option("--out", out_path, "write to a file instead of stdout");
  download->callback([&] {
    http::Client client(parse_peer(remote).url);
    http::Client::DownloadResult result = client.download_keys(
        filter_from_flags(download), cursor, static_cast<std::size_t>(limit));
    if (result.status != commons::Status::kOk) {
      std::cerr << status_line(result.status) << "\n";
      rc = status_exit(result.status);
      return;
    }
    if (out_path.empty()) {
      wire::write_export(std::cout, result.batch);
      std::cerr << "count=" << result.batch.size()
                << " next_cursor=" << result.next_cursor << "\n";
    } else {
      std::ofstream out(out_path);
      if (!out) throw Fail("cannot write " + out_path);
      wire::write_export(out, result.batch);
      std::cout << "count=" << result.batch.size()
                << " next_cursor=" << result.next_cursor << "\n";
    }
  });

  CLI::App* forward = commons_cmd->add_subcommand(
      "forward", "push local records to a peer instance");
  forward->add_option("--data-dir", data_dir,
                      "local journal directory (EN_COMMONS_DATA overrides)");
  forward->add_option("--id", instance_id, "local instance identifier")
      ->required();
  forward->add_option("--remote", remote, "peer as NAME=URL")->required();
  add_filter_flags(forward);
  forward->add_flag("--queued", flush_queued,
                    "send the queued forwards instead of a filtered push");
  forward->add_option("--now", now_interval, "pin the clock (interval)");
  forward->callback([&] {
    commons::InstanceConfig config;
    config.instance_id = instance_id;
    config.data_dir = resolve_data_dir(data_dir);
    commons::Instance instance(config);
    RemotePeer peer = parse_peer(remote);
    http::HttpTransport transport;
    transport.add_peer(peer.name, peer.url);
    core::IntervalNumber now =
        forward->count("--now")
            ? core::IntervalNumber{now_interval}
            : core::interval_from_timestamp(static_cast<std::uint64_t>(
                  std::time(nullptr)));
    commons::Instance::TransferResult result =
        flush_queued
            ? instance.flush_forwards(transport, now)
            : instance.forward_keys(transport, peer.name,
                                    filter_from_flags(forward), now);
    std::cout << status_line(result.status) << "\n"
              << "forwarded=" << result.count << "\n";
    rc = status_exit(result.status);
  });

  CLI::App* subscribe = commons_cmd->add_subcommand(
      "subscribe", "register a pull subscription and run it once");
  subscribe->add_option("--data-dir", data_dir,
                        "local journal directory (EN_COMMONS_DATA overrides)");
  subscribe->add_option("--id", instance_id, "local instance identifier")
      ->required();
  subscribe->add_option("--remote", remote, "peer as NAME=URL")->required();
  add_filter_flags(subscribe);
  subscribe->add_option("--cursor", cursor, "start after this sequence number");
  subscribe->add_flag("--no-run", no_run, "register only, do not pull now");
  subscribe->add_option("--now", now_interval, "pin the clock (interval)");
  subscribe->callback([&] {
    commons::InstanceConfig config;
    config.instance_id = instance_id;
    config.data_dir = resolve_data_dir(data_dir);
    commons::Instance instance(config);
    RemotePeer peer = parse_peer(remote);
    commons::Subscription sub;
    sub.remote_instance = peer.name;
    sub.filter = filter_from_flags(subscribe);
    sub.cursor = cursor;
    commons::Status added = instance.add_subscription(sub);
    if (added != commons::Status::kOk) {
      std::cout << status_line(added) << "\n";
      rc = status_exit(added);
      return;
    }
    if (no_run) {
      std::cout << status_line(added) << "\n";
      return;
    }
    http::HttpTransport transport;
    transport.add_peer(peer.name, peer.url);
    core::IntervalNumber now =
        subscribe->count("--now")
            ? core::IntervalNumber{now_interval}
            : core::interval_from_timestamp(static_cast<std::uint64_t>(
                  std::time(nullptr)));
    commons::Instance::TransferResult result =
        instance.run_subscription(transport, peer.name, now);
    std::uint64_t cursor_after = 0;
    for (const commons::Subscription& s : instance.subscriptions()) {
      if (s.remote_instance == peer.name) cursor_after = s.cursor;
    }
    std::cout << status_line(result.status) << "\n"
              << "pulled=" << result.count << "\n"
              << "cursor=" << cursor_after << "\n";
    rc = status_exit(result.status);
  });

  // ---- sim ----
  CLI::App* sim_cmd = app.add_subcommand("sim", "deterministic simulation");
  sim_cmd->require_subcommand(1);

  CLI::App* sim_run = sim_cmd->add_subcommand("run", "run one world");
  sim_run->add_option("--config", config_path, "world config JSON")
      ->required();
  sim_run->add_option("--seed", seed, "override the config seed");
  sim_run->add_option("--out", out_path, "write metrics JSON to a file");
  sim_run->callback([&] {
    std::ifstream in = open_input(config_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Fail("config is not valid JSON");
    sim::WorldConfig config = sim::world_config_from_json(j);
    if (sim_run->count("--seed")) config.seed = seed;
    nlohmann::json metrics = sim::to_json(sim::run_world(config));
    if (out_path.empty()) {
      std::cout << metrics.dump(2) << "\n";
    } else {
      std::ofstream out(out_path);
      if (!out) throw Fail("cannot write " + out_path);
      out << metrics.dump(2) << "\n";
    }
  });

  CLI::App* sim_sweep = sim_cmd->add_subcommand(
      "sweep", "rerun a world across participation levels");
  sim_sweep->add_option("--config", config_path, "world config JSON")
      ->required();
  sim_sweep->add_option("--participations", participations_csv,
                        "levels, comma-separated (default 0.2,0.4,0.8)");
  sim_sweep->add_option("--trials", trials, "trials per level (default 5)");
  sim_sweep->add_option("--out", out_path, "write CSV to a file");
  sim_sweep->callback([&] {
    std::ifstream in = open_input(config_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Fail("config is not valid JSON");
    sim::WorldConfig base = sim::world_config_from_json(j);
    std::vector<double> levels;
    for (const std::string& part : split_csv(participations_csv)) {
      try {
        levels.push_back(std::stod(part));
      } catch (const std::exception&) {
        throw Fail("bad participation level: " + part);
      }
    }
    if (levels.empty()) throw Fail("no participation levels");
    sim::SweepResult result = sim::participation_sweep(base, levels, trials);
    if (out_path.empty()) {
      sim::write_sweep_csv(std::cout, result);
    } else {
      std::ofstream out(out_path);
      if (!out) throw Fail("cannot write " + out_path);
      sim::write_sweep_csv(out, result);
    }
    std::cerr << "slope=" << fmt_g(result.loglog_slope) << "\n";
  });

  CLI::App* sim_ab = sim_cmd->add_subcommand(
      "avery-bernie", "run the fixed indirect-exposure scenario");
  sim_ab->add_option("--out", out_path, "write the exchange export to a file");
  sim_ab->callback([&] {
    sim::AveryBernieOutcome outcome = sim::scenario_avery_bernie();
    std::cout << "bernie_notified="
              << (outcome.bernie_notified ? "true" : "false") << "\n"
              << "bernie_risk=" << fmt_g(outcome.bernie_risk) << "\n"
              << "shop_published="
              << (outcome.shop_published ? "true" : "false") << "\n"
              << "bus_published=" << (outcome.bus_published ? "true" : "false")
              << "\n";
    if (!out_path.empty()) {
      std::ofstream out(out_path);
      if (!out) throw Fail("cannot write " + out_path);
      out << outcome.commons_export;
    }
    if (!outcome.bernie_notified) rc = 1;
  });

  // ---- estimate ----
  CLI::App* estimate = app.add_subcommand(
      "estimate", "daily bandwidth and compute for a deployment size");
  estimate->add_option("--diagnoses", est_diagnoses, "diagnoses per day")
      ->required();
  estimate->add_option("--teks", est_teks, "keys published per diagnosis")
      ->required();
  estimate->add_option("--bytes", est_bytes, "bytes per key (default 16)");
  estimate->add_option("--overhead", est_overhead,
                       "transport overhead factor (default 1.0)");
  estimate->callback([&] {
    core::DailyLoadEstimate est;
    try {
      est = core::estimate_daily_load(est_diagnoses, est_teks, est_bytes,
                                      est_overhead);
    } catch (const std::exception& e) {
      throw Fail(e.what());
    }
    std::cout << "raw_bytes_per_day=" << est.raw_bytes_per_day << "\n"
              << "reported_bytes_per_day=" << fmt_g(est.reported_bytes_per_day)
              << "\n"
              << "rpi_derivations_per_day=" << est.rpi_derivations_per_day
              << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  } catch (const Fail& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return rc;
}
