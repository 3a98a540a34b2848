#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "icat/catalog.hpp"
#include "icat/peer.hpp"
#include "icat/tcp_transport.hpp"

using namespace icat;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

std::uint64_t now_us() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                        std::chrono::steady_clock::now().time_since_epoch())
                                        .count());
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::IntegrityViolation:
    case ErrorCode::CorruptData:
    case ErrorCode::CorruptBlock:
    case ErrorCode::ProofMismatch:
    case ErrorCode::ListProofFailed:
      return 2;
    case ErrorCode::SealQuorumFailed:
    case ErrorCode::VerifyQuorumFailed:
    case ErrorCode::VerifyMismatch:
    case ErrorCode::RecoverQuorumFailed:
      return 3;
    case ErrorCode::IoError:
      return 4;
    default:
      return 1;
  }
}

std::unique_ptr<Catalog> open_catalog(const Config& cfg, Transport* t) {
  return Catalog::open(cfg, t);
}

// With no verifiers configured, reads fall back to trusting the local list
// head; tree corruption below it is still detected through the proofs.
VerifiedContext make_context(Catalog& cat) {
  if (!cat.config().verifiers.empty()) return cat.verify();
  CatalogToken token = cat.local_token();
  if (token.snapshot_id == 0) raise(ErrorCode::UnknownSnapshot, "no sealed snapshot yet");
  ListProof proof = cat.list().prove(token.snapshot_id);
  SnapshotRecord rec = verify_list_proof(proof, token.authenticator, cat.pad().hash());
  return VerifiedContext{token.snapshot_id, token.authenticator, rec.pra, rec.root};
}

std::map<std::string, std::string> load_allowlist(const std::string& path) {
  std::map<std::string, std::string> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open allowlist file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    std::string id = trim(line.substr(0, eq));
    std::string addr = trim(line.substr(eq + 1));
    if (!id.empty() && !addr.empty()) out[id] = addr;
  }
  return out;
}

struct BenchConfig {
  std::uint64_t keys_per_snapshot = 50000;
  std::uint64_t snapshots = 10;
  std::uint64_t searches = 10000;
  std::uint32_t skip_no = 0;
  std::uint64_t seed = 42;
  std::string input_file;
  std::string out_csv;
};

int run_bench(const Config& base_cfg, const BenchConfig& bc) {
  Config cfg = base_cfg;
  cfg.skip_no = bc.skip_no;
  std::filesystem::remove(cfg.catalog_path);
  auto cat = Catalog::create(cfg);

  std::vector<std::string> identifiers;
  if (!bc.input_file.empty()) {
    std::ifstream in(bc.input_file);
    if (!in) raise(ErrorCode::IoError, "cannot open input file: " + bc.input_file);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) identifiers.push_back(line);
  }

  std::ostream* out = &std::cout;
  std::ofstream csv;
  if (!bc.out_csv.empty()) {
    csv.open(bc.out_csv);
    if (!csv) raise(ErrorCode::IoError, "cannot open output file: " + bc.out_csv);
    out = &csv;
  }
  *out << "snapshot_id,inserts,avg_insert_us,avg_snapshot_us_per_elem,"
          "searches,avg_search_us,file_size_bytes\n";

  std::mt19937_64 rng(bc.seed);
  const HashFunction& h = cat->pad().hash();
  std::uint64_t total_keys = 0;
  std::vector<std::string> all_keys;

  for (std::uint64_t s = 1; s <= bc.snapshots; ++s) {
    std::uint64_t t0 = now_us();
    for (std::uint64_t i = 0; i < bc.keys_per_snapshot; ++i) {
      std::string key;
      if (!identifiers.empty())
        key = identifiers[(total_keys + i) % identifiers.size()] + "#" +
              std::to_string((total_keys + i) / identifiers.size());
      else
        key = "urn:obj/" + std::to_string(total_keys + i);
      // value mimics a host-computed digest of the object
      std::string value = h.name() + ":" + h.hash(to_bytes(key)).hex();
      cat->put(to_bytes(key), to_bytes(value));
      all_keys.push_back(std::move(key));
    }
    std::uint64_t t1 = now_us();
    cat->seal_local();
    std::uint64_t t2 = now_us();
    total_keys += bc.keys_per_snapshot;

    // verified searches across all sealed snapshots
    std::uint64_t search_us = 0;
    for (std::uint64_t q = 0; q < bc.searches; ++q) {
      std::uint64_t sid = rng() % s + 1;
      const std::string& key = all_keys[rng() % all_keys.size()];
      const SnapshotView& v = cat->pad().view(sid);
      std::uint64_t q0 = now_us();
      cat->pad().verified_get(to_bytes(key), sid, v.pra);
      search_us += now_us() - q0;
    }

    *out << s << "," << bc.keys_per_snapshot << ","
         << static_cast<double>(t1 - t0) / static_cast<double>(bc.keys_per_snapshot) << ","
         << static_cast<double>(t2 - t1) / static_cast<double>(bc.keys_per_snapshot) << ","
         << bc.searches << ","
         << (bc.searches ? static_cast<double>(search_us) / static_cast<double>(bc.searches)
                         : 0.0)
         << "," << cat->pad().store().file_size() << "\n";
    out->flush();
  }
  return 0;
}

int run_serve(const Config& cfg, const std::string& role, const std::string& listen,
              const std::string& data_dir, const std::string& allowlist_path) {
  PeerNode::Options opt;
  opt.node_id = cfg.node_id;
  opt.preserver = role == "preserver";
  opt.data_dir = data_dir.empty() ? "." : data_dir;
  opt.page_size = cfg.page_size;
  opt.skip_no = cfg.skip_no;
  opt.hash_id = cfg.hash_id;
  opt.origin_allowlist = load_allowlist(allowlist_path);

  TcpTransport transport;
  PeerNode node(opt, transport);
  TcpServer server(listen, [&node](const PeerMessage& m) { return node.handle(m); });
  server.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving as " << role << " on " << listen << " (port " << server.port()
            << ")\n";
  while (!g_stop) {
    node.run_pending();
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  server.stop();
  return 0;
}

int run_stats(const Config& cfg) {
  auto cat = open_catalog(cfg, nullptr);
  RecordStore& store = cat->pad().store();
  std::cout << "file: " << cfg.catalog_path << "\n"
            << "file_size_bytes: " << store.file_size() << "\n"
            << "page_size: " << store.page_size() << "\n"
            << "blocks: " << store.block_count() << "\n"
            << "snapshots: " << cat->latest_snapshot() << "\n"
            << "open_epoch: " << cat->pad().open_epoch() << "\n";
  std::cout << "blocks_per_snapshot:\n";
  for (std::uint64_t s = 1; s <= cat->pad().open_epoch(); ++s) {
    auto blocks = store.blocks_of_epoch(s);
    if (!blocks.empty()) std::cout << "  " << s << ": " << blocks.size() << "\n";
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"integrity catalog for digital repositories"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "configuration file")->required();

  auto* cmd_init = app.add_subcommand("init", "create an empty catalog");

  std::string arg_key, arg_value;
  auto* cmd_put = app.add_subcommand("put", "register a key with its digest value");
  cmd_put->add_option("key", arg_key)->required();
  cmd_put->add_option("value", arg_value)->required();

  auto* cmd_amend = app.add_subcommand("amend", "append to an existing key's value");
  cmd_amend->add_option("key", arg_key)->required();
  cmd_amend->add_option("suffix", arg_value)->required();

  auto* cmd_get = app.add_subcommand("get", "verified read of a key");
  cmd_get->add_option("key", arg_key)->required();

  auto* cmd_history = app.add_subcommand("history", "verified modification history of a key");
  cmd_history->add_option("key", arg_key)->required();

  auto* cmd_seal = app.add_subcommand("seal", "close the epoch and publish the token");
  auto* cmd_verify = app.add_subcommand("verify", "check local state against the verifiers");
  std::uint64_t recover_seed = 0;
  auto* cmd_recover = app.add_subcommand("recover", "rebuild from the preservers");
  cmd_recover->add_option("--seed", recover_seed, "holder selection seed");

  std::string serve_role = "verifier", serve_listen, serve_data_dir, serve_allowlist;
  auto* cmd_serve = app.add_subcommand("serve", "run a verifier/preserver daemon");
  cmd_serve->add_option("--role", serve_role)->check(CLI::IsMember({"verifier", "preserver"}));
  cmd_serve->add_option("--listen", serve_listen)->required();
  cmd_serve->add_option("--data-dir", serve_data_dir);
  cmd_serve->add_option("--origin-allowlist", serve_allowlist);

  BenchConfig bc;
  auto* cmd_bench = app.add_subcommand("bench", "ingestion/search benchmark, CSV output");
  cmd_bench->add_option("--keys-per-snapshot", bc.keys_per_snapshot);
  cmd_bench->add_option("--snapshots", bc.snapshots);
  cmd_bench->add_option("--searches", bc.searches);
  cmd_bench->add_option("--skip", bc.skip_no);
  cmd_bench->add_option("--seed", bc.seed);
  cmd_bench->add_option("--input", bc.input_file, "newline-delimited identifiers");
  cmd_bench->add_option("--out", bc.out_csv);

  std::uint64_t corrupt_offset = 0;
  std::uint64_t truncate_to = 0;
  bool do_truncate = false;
  auto* cmd_corrupt = app.add_subcommand("corrupt", "damage the catalog file (testing)");
  cmd_corrupt->add_option("--offset", corrupt_offset, "flip the octet at this offset");
  cmd_corrupt->add_flag("--truncate", do_truncate, "truncate instead of flipping");
  cmd_corrupt->add_option("--length", truncate_to, "new length for --truncate");

  auto* cmd_stats = app.add_subcommand("stats", "print catalog statistics");

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = Config::load(config_path);
    TcpTransport transport;
    Transport* t = cfg.verifiers.empty() ? nullptr : &transport;

    if (app.got_subcommand(cmd_init)) {
      Catalog::create(cfg);
      std::cout << "created " << cfg.catalog_path << "\n";
    } else if (app.got_subcommand(cmd_put)) {
      auto cat = open_catalog(cfg, t);
      cat->put(to_bytes(arg_key), to_bytes(arg_value));
      cat->pad().store().flush(false);
    } else if (app.got_subcommand(cmd_amend)) {
      auto cat = open_catalog(cfg, t);
      cat->amend(to_bytes(arg_key), to_bytes(arg_value));
      cat->pad().store().flush(false);
    } else if (app.got_subcommand(cmd_get)) {
      auto cat = open_catalog(cfg, t);
      VerifiedContext ctx = make_context(*cat);
      auto val = cat->verified_get(ctx, to_bytes(arg_key));
      if (!val) {
        std::cout << "absent\n";
        return 1;
      }
      std::cout << to_string(val->first) << "\t(stored at snapshot " << val->second << ")\n";
    } else if (app.got_subcommand(cmd_history)) {
      auto cat = open_catalog(cfg, t);
      VerifiedContext ctx = make_context(*cat);
      for (const auto& e : cat->history(ctx, to_bytes(arg_key)))
        std::cout << e.snapshot_id << "\t" << e.timestamp << "\t" << to_string(e.value)
                  << "\n";
    } else if (app.got_subcommand(cmd_seal)) {
      auto cat = open_catalog(cfg, t);
      CatalogToken token = t ? cat->seal() : cat->seal_local();
      std::cout << token.snapshot_id << "\t" << token.authenticator.hex() << "\n";
    } else if (app.got_subcommand(cmd_verify)) {
      auto cat = open_catalog(cfg, t);
      VerifiedContext ctx = cat->verify();
      std::cout << "verified snapshot " << ctx.snapshot_id << "\tla "
                << ctx.la.hex() << "\tpra " << ctx.pra.hex() << "\n";
    } else if (app.got_subcommand(cmd_recover)) {
      auto cat = open_catalog(cfg, t);
      VerifiedContext ctx = cat->recover(recover_seed);
      std::cout << "recovered to snapshot " << ctx.snapshot_id << "\tla " << ctx.la.hex()
                << "\n";
    } else if (app.got_subcommand(cmd_serve)) {
      return run_serve(cfg, serve_role, serve_listen, serve_data_dir, serve_allowlist);
    } else if (app.got_subcommand(cmd_bench)) {
      return run_bench(cfg, bc);
    } else if (app.got_subcommand(cmd_corrupt)) {
      if (do_truncate) {
        std::filesystem::resize_file(cfg.catalog_path, truncate_to);
      } else {
        std::fstream f(cfg.catalog_path, std::ios::in | std::ios::out | std::ios::binary);
        if (!f) raise(ErrorCode::IoError, "cannot open " + cfg.catalog_path);
        f.seekg(static_cast<std::streamoff>(corrupt_offset));
        char c = 0;
        f.read(&c, 1);
        if (!f) raise(ErrorCode::IoError, "offset beyond end of file");
        c = static_cast<char>(c ^ 0xFF);
        f.seekp(static_cast<std::streamoff>(corrupt_offset));
        f.write(&c, 1);
      }
    } else if (app.got_subcommand(cmd_stats)) {
      return run_stats(cfg);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
