// eyelive: gaze engine server and operator tools.

#include <atomic>
#include <csignal>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "eyelive/bench.hpp"
#include "eyelive/compare.hpp"
#include "eyelive/files.hpp"
#include "eyelive/oracle.hpp"
#include "eyelive/replay.hpp"
#include "eyelive/server.hpp"
#include "eyelive/simulate.hpp"

using namespace eyelive;

namespace {

constexpr int kOk = 0;
constexpr int kAssertion = 1;
constexpr int kInputError = 2;

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

// Engine settings shared by every subcommand.
struct ConfigFlags {
  std::string file;
  std::optional<double> threshold;
  std::optional<int> window;
  std::optional<double> min_fixation_ms;
  std::optional<double> max_gap_ms;
  std::optional<std::string> first_pass_mode;
  std::optional<double> flush_interval_s;

  void add(CLI::App& app) {
    app.add_option("--config", file, "JSON config file; flags override it")->check(CLI::ExistingFile);
    app.add_option("--threshold", threshold, "I-VT velocity threshold in deg/s (default 30)");
    app.add_option("--window", window, "velocity window in samples (default 2)");
    app.add_option("--min-fixation", min_fixation_ms, "minimum fixation duration in ms (default 0)");
    app.add_option("--max-gap", max_gap_ms, "gap that ends a run, in ms (default 100)");
    app.add_option("--first-pass-mode", first_pass_mode, "strict or first_visit (default strict)");
    app.add_option("--flush-interval", flush_interval_s, "flush cadence in seconds (default 5)");
  }

  bool given() const {
    return !file.empty() || threshold || window || min_fixation_ms || max_gap_ms || first_pass_mode ||
           flush_interval_s;
  }

  SessionConfig resolve(SessionConfig c = {}) const {
    if (!file.empty()) c = load_config(file, c);
    if (threshold) c.ivt.threshold_dps = *threshold;
    if (window) c.ivt.window_samples = *window;
    if (min_fixation_ms) c.ivt.min_fixation_us = std::llround(*min_fixation_ms * 1e3);
    if (max_gap_ms) c.ivt.max_gap_us = std::llround(*max_gap_ms * 1e3);
    if (first_pass_mode) c.first_pass_mode = parse_first_pass_mode(*first_pass_mode);
    if (flush_interval_s) c.flush.interval_us = std::llround(*flush_interval_s * 1e6);
    check_config(c);
    return c;
  }
};

void write_out(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
  } else {
    write_file(path, data);
  }
}

int cmd_serve(const ConfigFlags& cf, unsigned short port, const std::string& store, const std::string& address,
              std::size_t threads, std::size_t queue, const std::string& flush_clock) {
  ServerOptions o;
  if (flush_clock == "sample") {
    o.flush_clock = Session::FlushClock::sample;
  } else if (flush_clock != "wall") {
    throw error(errc::parse_error, "flush clock must be wall or sample");
  }
  o.config = cf.resolve();
  if (!store.empty()) o.store = store;
  o.address = address;
  o.threads = threads;
  o.viewer_queue = queue;
  Server srv(o);
  const auto bound = srv.start(port);
  std::cout << "listening on " << address << ":" << bound << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  srv.stop();
  const auto c = srv.counters();
  std::cerr << "sessions " << srv.session_ids().size() << ", connections " << c.connections << ", refused "
            << c.refused << ", viewers dropped " << c.viewers_dropped << "\n";
  return kOk;
}

struct ReplayFlags {
  std::string log, manifest, host = "127.0.0.1", session = "replay", participant = "replay", out, csv;
  unsigned short port = 8765;
  double speed = 1.0;
  bool local = false;
};

int cmd_replay(const ConfigFlags& cf, const ReplayFlags& f) {
  const auto m = load_manifest(f.manifest);
  const auto log = load_gaze_log(f.log);
  const auto msgs = replay_messages({m, log, {}, f.session, f.participant});
  if (f.local) {
    std::unique_ptr<RecordSink> sink;
    if (!f.out.empty()) {
      std::filesystem::remove(f.out);
      sink = std::make_unique<FileSink>(f.out);
    }
    auto s = run_offline(msgs, cf.resolve(), std::move(sink));
    write_out(f.csv, s->metrics_csv());
    std::cerr << s->fixations().size() << " fixations, " << s->saccades().size() << " saccades\n";
    return kOk;
  }
  if (f.speed < 0) throw error(errc::parse_error, "speed must be >= 0");
  const auto st = replay_ws(f.host, f.port, msgs, f.speed);
  std::cerr << "sent " << st.sent << " messages; log " << std::fixed << std::setprecision(3) << st.log_seconds
            << " s, wall " << st.wall_seconds << " s\n";
  return kOk;
}

struct SimulateFlags {
  std::string manifest, out = "-";
  sim::ReadingProfile p;
  std::optional<int> regress_after;
};

int cmd_simulate(const ConfigFlags& cf, SimulateFlags f) {
  const auto m = load_manifest(f.manifest);
  f.p.regress_after = f.regress_after;
  std::ostringstream os;
  write_gaze_log(os, sim::simulate(m, f.p, cf.resolve().screen).log);
  write_out(f.out, os.str());
  return kOk;
}

int cmd_layout(const std::string& text_file, int words, int paragraphs, std::uint64_t seed, const std::string& out) {
  const std::string text = text_file.empty() ? sim::filler_text(words, paragraphs, seed) : read_file(text_file);
  const auto m = sim::layout_from_text(text);
  validate(m);
  write_out(out, manifest_json(m));
  return kOk;
}

int cmd_oracle(const ConfigFlags& cf, const std::string& session, const std::string& log, const std::string& manifest,
               const std::string& out) {
  std::ostringstream os;
  if (!session.empty()) {
    const auto s = load_session_file(session);
    // Explicit settings must match the recording; otherwise the recorded ones apply.
    const auto expected = cf.given() ? std::optional<SessionConfig>(cf.resolve()) : std::nullopt;
    oracle::write_csv(os, oracle::from_session(s, expected), s.manifests);
  } else {
    if (log.empty() || manifest.empty()) throw error(errc::parse_error, "need --session, or --log and --manifest");
    const auto c = cf.resolve();
    const auto m = load_manifest(manifest);
    const auto r = oracle::run({load_gaze_log(log).samples, m, {}, c.ivt, c.screen, c.first_pass_mode});
    oracle::write_csv(os, r.metrics, {m});
  }
  write_out(out, os.str());
  return kOk;
}

int cmd_compare(const std::string& a, const std::string& b, bool require_exact) {
  const auto rep = compare(load_metrics_csv(a), load_metrics_csv(b));
  print_report(std::cout, rep);
  return require_exact && !all_exact(rep) ? kAssertion : kOk;
}

int cmd_export(const std::string& session, const std::string& out) {
  const auto s = load_session_file(session);
  if (s.bad_lines) std::cerr << "skipped " << s.bad_lines << " unreadable line(s)\n";
  std::ostringstream os;
  export_metrics_csv(os, s);
  write_out(out, os.str());
  return kOk;
}

struct BenchFlags {
  std::string log, manifest;
  BenchOptions o;
  double budget_us = kLatencyBudgetUs;
};

int cmd_bench(const ConfigFlags& cf, BenchFlags f) {
  f.o.config = cf.resolve();
  BenchResult r;
  if (!f.log.empty() || !f.manifest.empty()) {
    if (f.log.empty() || f.manifest.empty()) throw error(errc::parse_error, "--log and --manifest go together");
    const auto m = load_manifest(f.manifest);
    r = run_bench(f.o, replay_messages({m, load_gaze_log(f.log), {}, "bench", "bench"}));
  } else {
    r = run_bench(f.o);
  }
  const bool ok = r.mean_us < f.budget_us;
  std::cout << std::fixed << std::setprecision(2) << "samples " << r.samples << "\n"
            << "mean_us " << r.mean_us << "\nsd_us " << r.sd_us << "\np50_us " << r.p50_us << "\np99_us "
            << r.p99_us << "\nmax_us " << r.max_us << "\nwall_s " << r.wall_seconds << "\nviewers_dropped "
            << r.viewers_dropped << "\nbudget_us " << f.budget_us << "\n"
            << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kOk : kAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Real-time gaze analytics engine and tools"};
  app.require_subcommand(1);
  ConfigFlags cf;

  auto* serve = app.add_subcommand("serve", "run the WebSocket engine");
  unsigned short port = 8765;
  std::string store, address = "127.0.0.1";
  std::size_t threads = 1, queue = 1024;
  std::string flush_clock = "wall";
  serve->add_option("--port", port, "listen port (0 picks one)");
  serve->add_option("--store", store, "directory for session files");
  serve->add_option("--address", address, "listen address");
  serve->add_option("--threads", threads, "I/O threads");
  serve->add_option("--viewer-queue", queue, "messages buffered per viewer before it is dropped");
  serve->add_option("--flush-clock", flush_clock, "wall, or sample for files that depend on input only");
  cf.add(*serve);

  auto* replay = app.add_subcommand("replay", "send a gaze log to a server, or run it in-process");
  ReplayFlags rf;
  replay->add_option("--log", rf.log, "gaze log CSV")->required()->check(CLI::ExistingFile);
  replay->add_option("--manifest", rf.manifest, "layout manifest JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--host", rf.host);
  replay->add_option("--port", rf.port);
  replay->add_option("--speed", rf.speed, "time factor; 0 sends as fast as possible");
  replay->add_option("--session", rf.session);
  replay->add_option("--participant", rf.participant);
  replay->add_flag("--local", rf.local, "process in this process instead of sending");
  replay->add_option("--out", rf.out, "with --local: session file to write");
  replay->add_option("--csv", rf.csv, "with --local: metrics CSV (default stdout)");
  cf.add(*replay);

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic reading gaze log");
  SimulateFlags sf;
  simulate->add_option("--manifest", sf.manifest)->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sf.out, "gaze log CSV (default stdout)");
  simulate->add_option("--rate", sf.p.rate_hz, "sampling rate in Hz");
  simulate->add_option("--fix-mean", sf.p.fix_mean_ms, "mean fixation duration in ms");
  simulate->add_option("--fix-sd", sf.p.fix_sd_ms, "fixation duration SD in ms");
  simulate->add_option("--p-skip", sf.p.p_skip);
  simulate->add_option("--p-regress", sf.p.p_regress);
  simulate->add_option("--regress-after", sf.regress_after, "always regress after this word");
  simulate->add_option("--regress-words", sf.p.regress_words);
  simulate->add_option("--p-refixate", sf.p.p_refixate);
  simulate->add_option("--noise", sf.p.noise_px, "gaussian noise sigma in px");
  simulate->add_option("--seed", sf.p.seed);
  simulate->add_flag("--3d", sf.p.with_3d, "emit eye origin and gaze point columns");
  cf.add(*simulate);

  auto* layout = app.add_subcommand("layout", "lay out text as a manifest");
  std::string text_file, layout_out = "-";
  int words = 200, paragraphs = 3;
  std::uint64_t layout_seed = 7;
  layout->add_option("--text", text_file, "UTF-8 text; blank lines separate paragraphs")->check(CLI::ExistingFile);
  layout->add_option("--words", words, "filler words when no text is given");
  layout->add_option("--paragraphs", paragraphs);
  layout->add_option("--seed", layout_seed);
  layout->add_option("--out", layout_out);

  auto* oracle_cmd = app.add_subcommand("oracle", "recompute metrics by whole-stream scans");
  std::string o_session, o_log, o_manifest, o_out = "-";
  oracle_cmd->add_option("--session", o_session, "session file")->check(CLI::ExistingFile);
  oracle_cmd->add_option("--log", o_log)->check(CLI::ExistingFile);
  oracle_cmd->add_option("--manifest", o_manifest)->check(CLI::ExistingFile);
  oracle_cmd->add_option("--out", o_out);
  cf.add(*oracle_cmd);

  auto* compare_cmd = app.add_subcommand("compare", "agreement between two metrics exports");
  std::string ca, cb;
  bool exact = false;
  compare_cmd->add_option("a", ca)->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("b", cb)->required()->check(CLI::ExistingFile);
  compare_cmd->add_flag("--require-exact", exact, "exit 1 unless every metric has MAE 0");

  auto* bench = app.add_subcommand("bench", "per-sample processing time through a local server");
  BenchFlags bf;
  bench->add_option("--samples", bf.o.samples, "synthetic samples");
  bench->add_option("--words", bf.o.words, "synthetic manifest size");
  bench->add_option("--stalled-viewers", bf.o.stalled_viewers);
  bench->add_option("--viewer-queue", bf.o.viewer_queue);
  bench->add_option("--seed", bf.o.seed);
  bench->add_option("--log", bf.log, "use this gaze log")->check(CLI::ExistingFile);
  bench->add_option("--manifest", bf.manifest)->check(CLI::ExistingFile);
  bench->add_option("--budget-us", bf.budget_us, "fail when the mean exceeds this");
  cf.add(*bench);

  auto* export_cmd = app.add_subcommand("export", "metrics CSV from a session file");
  std::string e_session, e_out = "-";
  export_cmd->add_option("--session", e_session)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--out", e_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  try {
    if (*serve) return cmd_serve(cf, port, store, address, threads, queue, flush_clock);
    if (*replay) return cmd_replay(cf, rf);
    if (*simulate) return cmd_simulate(cf, sf);
    if (*layout) return cmd_layout(text_file, words, paragraphs, layout_seed, layout_out);
    if (*oracle_cmd) return cmd_oracle(cf, o_session, o_log, o_manifest, o_out);
    if (*compare_cmd) return cmd_compare(ca, cb, exact);
    if (*bench) return cmd_bench(cf, bf);
    if (*export_cmd) return cmd_export(e_session, e_out);
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
