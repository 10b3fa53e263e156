#include "scramblesuit/flowstats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "scramblesuit/crypto.hpp"
#include "scramblesuit/session.hpp"

namespace scramblesuit::flowstats {

void FlowTrace::add(std::int64_t t_us, Direction dir, std::uint32_t bytes) {
  records.push_back({t_us, dir, bytes});
}

std::vector<double> FlowTrace::lengths(Direction dir) const {
  std::vector<double> out;
  for (const auto& r : records)
    if (r.direction == dir) out.push_back(static_cast<double>(r.wire_bytes));
  return out;
}

std::vector<double> FlowTrace::inter_arrival_ms(Direction dir) const {
  std::vector<double> out;
  std::int64_t prev = -1;
  for (const auto& r : records) {
    if (r.direction != dir) continue;
    if (prev >= 0)
      out.push_back(static_cast<double>(r.timestamp_us - prev) / 1000.0);
    prev = r.timestamp_us;
  }
  return out;
}

Ecdf ecdf(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("ecdf of empty sample set");
  std::sort(samples.begin(), samples.end());
  Ecdf f;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); i++) {
    if (!f.support.empty() && f.support.back() == samples[i]) {
      f.cumulative.back() = static_cast<double>(i + 1) / n;
    } else {
      f.support.push_back(samples[i]);
      f.cumulative.push_back(static_cast<double>(i + 1) / n);
    }
  }
  return f;
}

double Ecdf::at(double x) const {
  auto it = std::upper_bound(support.begin(), support.end(), x);
  if (it == support.begin()) return 0.0;
  return cumulative[static_cast<std::size_t>(it - support.begin()) - 1];
}

KsResult ks_two_sample(const std::vector<double>& a,
                       const std::vector<double>& b, double alpha) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("ks_two_sample needs non-empty samples");
  Ecdf fa = ecdf(a);
  Ecdf fb = ecdf(b);

  double d = 0.0;
  for (double x : fa.support) d = std::max(d, std::abs(fa.at(x) - fb.at(x)));
  for (double x : fb.support) d = std::max(d, std::abs(fa.at(x) - fb.at(x)));

  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double critical =
      std::sqrt(-0.5 * std::log(alpha / 2.0)) *
      std::sqrt((na + nb) / (na * nb));
  return {d, d > critical};
}

OverheadReport overhead_report(const FlowTrace& trace,
                               std::uint64_t app_bytes_delivered) {
  OverheadReport report;
  std::uint64_t c2s = 0;
  std::uint64_t s2c = 0;
  for (const auto& r : trace.records) {
    std::uint64_t on_wire = r.wire_bytes + kSegmentHeaderBytes;
    if (r.direction == Direction::C2S)
      c2s += on_wire;
    else
      s2c += on_wire;
  }
  const std::uint64_t total = c2s + s2c;
  report.c2s_kbytes = static_cast<double>(c2s) / 1000.0;
  report.s2c_kbytes = static_cast<double>(s2c) / 1000.0;
  report.total_overhead =
      total == 0 ? 0.0
                 : static_cast<double>(total - std::min(total,
                                                        app_bytes_delivered)) /
                       static_cast<double>(total);
  if (trace.records.size() >= 2) {
    auto span_us = trace.records.back().timestamp_us -
                   trace.records.front().timestamp_us;
    if (span_us > 0)
      report.goodput_bytes_per_sec = static_cast<double>(app_bytes_delivered) *
                                     1e6 / static_cast<double>(span_us);
  }
  return report;
}

Bytes trial_seed(std::uint64_t base_seed, std::uint32_t trial) {
  Bytes buf;
  put_u64be(buf, base_seed);
  put_u64be(buf, trial);
  return crypto::sha256({buf.data(), buf.size()});
}

TrialResult run_flow_trial(std::uint64_t size, const Bytes& seed32,
                           std::uint32_t app_chunk_bytes) {
  TrialResult result;
  std::int64_t virtual_us = 0;

  auto tick = [&result, &virtual_us](Direction dir,
                                     const session::WireSegment& seg) {
    // virtual clock: the configured sleep plus serialisation at 100 Mbit/s
    virtual_us += static_cast<std::int64_t>(seg.delay_ms) * 1000 +
                  static_cast<std::int64_t>(seg.data.size()) * 8 / 100 + 1;
    result.trace.add(virtual_us, dir, static_cast<std::uint32_t>(seg.data.size()));
  };

  Bytes secret = crypto::secure_random(20);
  auto clock = session::system_clock();
  session::ServerContext ctx(secret, clock);
  session::ServerSession server(ctx, trial_seed(get_u64be(seed32.data()), 1));

  session::ClientSession::Config ccfg;
  ccfg.bridge_secret = secret;
  ccfg.morph_seed = seed32;
  ccfg.clock = clock;
  session::ClientSession client(std::move(ccfg));

  Bytes echoed;

  // Deliver one batch of client writes, then echo everything the server
  // decoded in a single application write, the way a relaying upstream that
  // drains its socket buffer would.
  auto client_to_server = [&](const std::vector<session::WireSegment>& segs) {
    Bytes decoded;
    std::vector<session::WireSegment> replies;
    auto pump_server = [&](const session::WireSegment& seg) {
      tick(Direction::C2S, seg);
      auto res = server.pump({seg.data.data(), seg.data.size()});
      append(decoded, {res.app_data.data(), res.app_data.size()});
      replies.insert(replies.end(), res.wire_out.begin(), res.wire_out.end());
    };
    for (const auto& seg : segs) pump_server(seg);

    for (int round = 0; round < 4; round++) {
      if (!decoded.empty()) {
        auto back = server.send_app({decoded.data(), decoded.size()});
        replies.insert(replies.end(), back.begin(), back.end());
        decoded.clear();
      }
      if (replies.empty()) break;
      std::vector<session::WireSegment> to_client;
      to_client.swap(replies);
      for (const auto& sseg : to_client) {
        tick(Direction::S2C, sseg);
        auto cres = client.pump({sseg.data.data(), sseg.data.size()});
        append(echoed, {cres.app_data.data(), cres.app_data.size()});
        for (const auto& more : cres.wire_out) pump_server(more);
      }
    }
  };

  client_to_server(client.connect());

  Bytes payload = crypto::secure_random(size);
  for (std::uint64_t off = 0; off < size; off += app_chunk_bytes) {
    std::size_t take =
        std::min<std::uint64_t>(app_chunk_bytes, size - off);
    client_to_server(client.send_app({payload.data() + off, take}));
  }

  result.payload_intact = (echoed == payload);
  result.report = overhead_report(result.trace, 2 * size);
  return result;
}

namespace {

void write_trace(const FlowTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : trace.records) {
    nlohmann::json line = {
        {"t_us", r.timestamp_us},
        {"dir", r.direction == Direction::C2S ? "c2s" : "s2c"},
        {"bytes", r.wire_bytes},
    };
    out << line.dump() << "\n";
  }
}

void write_ecdf(const std::vector<double>& samples,
                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << "value\tcumulative\n";
  if (samples.empty()) return;
  Ecdf f = ecdf(samples);
  for (std::size_t i = 0; i < f.support.size(); i++)
    out << f.support[i] << "\t" << f.cumulative[i] << "\n";
}

}  // namespace

int run_harness(const RunConfig& config) {
  std::filesystem::create_directories(config.out_dir);

  nlohmann::json report;
  report["size"] = config.size;
  report["trials"] = config.trials;
  report["seed"] = config.seed;
  report["trial_results"] = nlohmann::json::array();
  report["ks_tests"] = nlohmann::json::array();

  std::vector<std::vector<double>> c2s_lengths;
  double overhead_sum = 0.0;
  for (std::uint32_t i = 0; i < config.trials; i++) {
    Bytes seed = trial_seed(config.seed, i);
    TrialResult trial = run_flow_trial(config.size, seed);
    if (!trial.payload_intact) return 1;

    auto tag = std::to_string(i);
    write_trace(trial.trace, config.out_dir / ("trace-" + tag + ".ndjson"));
    write_ecdf(trial.trace.lengths(Direction::C2S),
               config.out_dir / ("ecdf-" + tag + "-c2s-len.tsv"));
    write_ecdf(trial.trace.lengths(Direction::S2C),
               config.out_dir / ("ecdf-" + tag + "-s2c-len.tsv"));
    write_ecdf(trial.trace.inter_arrival_ms(Direction::C2S),
               config.out_dir / ("ecdf-" + tag + "-c2s-iat.tsv"));

    report["trial_results"].push_back({
        {"trial", i},
        {"goodput_bytes_per_sec", trial.report.goodput_bytes_per_sec},
        {"c2s_kbytes", trial.report.c2s_kbytes},
        {"s2c_kbytes", trial.report.s2c_kbytes},
        {"total_overhead", trial.report.total_overhead},
    });
    overhead_sum += trial.report.total_overhead;
    c2s_lengths.push_back(trial.trace.lengths(Direction::C2S));
  }

  for (std::size_t i = 0; i + 1 < c2s_lengths.size(); i++) {
    KsResult ks = ks_two_sample(c2s_lengths[i], c2s_lengths[i + 1], 0.05);
    report["ks_tests"].push_back({
        {"pair", {i, i + 1}},
        {"statistic", ks.statistic},
        {"reject_equality", ks.reject},
    });
  }
  if (config.trials > 0)
    report["mean_overhead"] = overhead_sum / config.trials;

  std::ofstream out(config.out_dir / "report.json", std::ios::trunc);
  out << report.dump(2) << "\n";
  return 0;
}

}  // namespace scramblesuit::flowstats
