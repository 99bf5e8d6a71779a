/*
 * Copyright 2026-present The nclab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "nclab/coding.hpp"
#include "nclab/experiments.hpp"
#include "nclab/nodesim.hpp"
#include "nclab/numopt.hpp"

using namespace nclab;

namespace {

int failures = 0;

void report(int n, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", n, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

bool near(double v, double want, double tol) { return std::abs(v - want) <= tol; }

Trajectory opt(const Scenario& sc, const LossMatrix& m, Variant v, bool record = false) {
  OptimizerConfig c;
  c.variant = v;
  c.record_states = record;
  return solve(sc, m, c);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::vector<LossPattern> kPatterns = {LossPattern::overhearing_only, LossPattern::direct_only,
                                            LossPattern::both, LossPattern::all_links};
const std::vector<double> kRates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};

void lossless_x() {
  auto t0 = std::chrono::steady_clock::now();
  Scenario sc = build_canonical(CanonicalKind::x);
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  double st = opt(sc, m, Variant::state).final_total();
  double sl = opt(sc, m, Variant::stateless).final_total();
  double no = opt(sc, m, Variant::nonc).final_total();
  double imp = st / no - 1;
  bool ok = near(st, 2.0 / 3, 0.01) && near(sl, 2.0 / 3, 0.01) && near(no, 0.5, 0.01) &&
            near(imp, 1.0 / 3, 0.02) && seconds_since(t0) < 5;
  report(1, "lossless X optimum", ok,
         fmt("state %.4f stateless %.4f nonc %.4f improvement %.1f%% in %.2fs", st, sl, no, 100 * imp,
             seconds_since(t0)));
}

void x_both_lossy() {
  auto t0 = std::chrono::steady_clock::now();
  Scenario sc = build_canonical(CanonicalKind::x);
  LossMatrix m = pattern_loss(sc, LossPattern::both, 0.3);
  double st = opt(sc, m, Variant::state).final_total();
  double sl = opt(sc, m, Variant::stateless).final_total();
  bool ok = near(st, 0.59, 0.01) && near(sl, 0.55, 0.01) && seconds_since(t0) < 5;
  report(2, "X with 30% loss on one direct and one overhearing link", ok,
         fmt("state %.4f stateless %.4f", st, sl));
}

void x_direct_lossy() {
  auto t0 = std::chrono::steady_clock::now();
  Scenario sc = build_canonical(CanonicalKind::x);
  LossMatrix m = pattern_loss(sc, LossPattern::direct_only, 0.5);
  Trajectory tr = opt(sc, m, Variant::state);
  double no = opt(sc, m, Variant::nonc).final_total();
  double x1 = tr.x.back()[0], x2 = tr.x.back()[1];
  double imp = tr.final_total() / no - 1;
  bool ok = near(x1, 0.4, 0.01) && near(x2, 0.2, 0.01) && near(imp, 0.44, 0.02) && seconds_since(t0) < 5;
  report(3, "X with 50% direct loss", ok, fmt("x1 %.4f x2 %.4f improvement %.1f%%", x1, x2, 100 * imp));
}

void x_overhearing_lossy() {
  auto t0 = std::chrono::steady_clock::now();
  Scenario sc = build_canonical(CanonicalKind::x);
  double lo = 1e9, hi = -1e9, imp = 0;
  for (double r : kRates) {
    LossMatrix m = pattern_loss(sc, LossPattern::overhearing_only, r);
    double no = opt(sc, m, Variant::nonc).final_total();
    lo = std::min(lo, no);
    hi = std::max(hi, no);
    if (r == 0.5) imp = opt(sc, m, Variant::state).final_total() / no - 1;
  }
  bool ok = near(imp, 0.166, 0.02) && hi - lo <= 0.01 && seconds_since(t0) < 5;
  report(4, "X with overhearing loss", ok,
         fmt("improvement at 50%% %.1f%%, nonc range [%.4f, %.4f]", 100 * imp, lo, hi));
}

void x_stateless_sweep() {
  auto t0 = std::chrono::steady_clock::now();
  Scenario sc = build_canonical(CanonicalKind::x);
  std::vector<double> imp;
  for (double r : kRates) {
    LossMatrix m = pattern_loss(sc, LossPattern::both, r);
    imp.push_back(opt(sc, m, Variant::stateless).final_total() / opt(sc, m, Variant::nonc).final_total() - 1);
  }
  bool falling = true;
  for (std::size_t i = 1; i < imp.size(); ++i) falling &= imp[i] <= imp[i - 1] + 1e-6;
  bool ok = near(imp[3], 0.22, 0.03) && std::abs(imp.back()) <= 0.01 && falling && seconds_since(t0) < 5;
  report(5, "stateless gain shrinks with loss", ok,
         fmt("improvement at 30%% %.1f%%, at 50%% %.2f%%, non-increasing %s", 100 * imp[3], 100 * imp.back(),
             falling ? "yes" : "no"));
}

void cross() {
  auto t0 = std::chrono::steady_clock::now();
  Scenario sc = build_canonical(CanonicalKind::cross);
  LossMatrix m0 = LossMatrix::uniform(sc.topo, 0.0);
  double st = opt(sc, m0, Variant::state).final_total();
  double sl = opt(sc, m0, Variant::stateless).final_total();
  double no = opt(sc, m0, Variant::nonc).final_total();
  double peak = 0;
  std::string where;
  for (auto p : kPatterns)
    for (double r : kRates) {
      LossMatrix m = pattern_loss(sc, p, r);
      double base = opt(sc, m, Variant::nonc).final_total();
      double nc = std::max(opt(sc, m, Variant::state).final_total(), opt(sc, m, Variant::stateless).final_total());
      if (nc / base - 1 > peak) {
        peak = nc / base - 1;
        where = fmt("%s at %.1f", to_string(p).c_str(), r);
      }
    }
  bool ok = near(st, 0.8, 0.01) && near(sl, 0.8, 0.01) && near(no, 0.5, 0.01) && peak >= 0.70 && peak <= 0.90;
  report(6, "cross topology", ok,
         fmt("lossless state %.4f stateless %.4f nonc %.4f, peak improvement %.1f%% (%s), %.1fs", st, sl, no,
             100 * peak, where.c_str(), seconds_since(t0)));
}

void convergence() {
  int total = 0, good = 0;
  double worst_mono = 1, worst_res = 0, worst_time = 0;
  long worst_iter = 0;
  for (auto kind : {CanonicalKind::x, CanonicalKind::cross}) {
    Scenario sc = build_canonical(kind);
    for (auto v : {Variant::state, Variant::stateless})
      for (auto p : kPatterns) {
        auto t0 = std::chrono::steady_clock::now();
        Problem pr(sc, pattern_loss(sc, p, 0.3), v);
        OptimizerConfig c;
        c.variant = v;
        c.record_states = true;
        Trajectory tr = solve(pr, c);
        ConvergenceReport rep = convergence_report(tr, pr);
        double dt = seconds_since(t0);
        ++total;
        bool ok = tr.converged && tr.iterations <= 100000 && rep.monotone_fraction >= 0.99 &&
                  rep.final_residual <= 1e-3 && dt < 5;
        good += ok;
        worst_mono = std::min(worst_mono, rep.monotone_fraction);
        worst_res = std::max(worst_res, rep.final_residual);
        worst_iter = std::max(worst_iter, tr.iterations);
        worst_time = std::max(worst_time, dt);
      }
  }
  report(7, "optimizer convergence", good == total,
         fmt("%d/%d converged; max iterations %ld, min monotone share %.4f, max residual %.2e, slowest %.2fs",
             good, total, worst_iter, worst_mono, worst_res, worst_time));
}

Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<uint8_t>(rng());
  return b;
}

void intra_roundtrip() {
  Rng rng(2026);
  std::string detail;
  bool ok = true;
  for (int G : {1, 4, 15, 32}) {
    const int P = 3;
    int success = 0, full = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<Bytes> orig;
      for (int i = 0; i < G; ++i) orig.push_back(random_bytes(rng, 32));
      std::vector<CodedPacket> all = incremental_encode(orig, 0, trial);
      for (auto& p : rlnc_parities(all, P, rng, G + 1)) all.push_back(p);
      std::shuffle(all.begin(), all.end(), rng);
      std::vector<CodedPacket> pick(all.begin(), all.begin() + G);
      DecodeResult d = intra_decode(pick, G);
      RankTracker rt(G);
      for (const auto& p : pick) rt.add(p.coeffs);
      if (rt.full()) {
        ++full;
        ok &= d.decoded && d.packets == orig;  // any full-rank subset decodes exactly
      }
      success += d.decoded && d.packets == orig;
    }
    ok &= success >= 950;
    detail += fmt("%sG=%d %d/1000", detail.empty() ? "" : ", ", G, success);
    ok &= full == success;
  }
  report(8, "intra-generation round trip", ok, detail);
}

// Relay trace with four S1 packets and one S2 packet. B2 overhears a1, a2, a4
// from A1 and receives a1+b1 and a3+a5 from the relay.
void relay_trace() {
  ParityCounts s1 = parity_counts(4, 0.0, {{1, 0.25}}, {{1, 0.5}}, Variant::stateless);
  ParityCounts s2 = parity_counts(1, 0.5, {{0, 0.0}}, {{0, 0.0}}, Variant::stateless);
  int p11 = s1.self, p22 = s2.self, p21 = s1.cross.at(1), p12 = s2.cross.at(0);
  bool counts = p11 == 0 && p22 == 1 && p21 == 2 && p12 == 0;

  int decoded = 0;
  const int trials = 1000;
  Rng rng(9);
  for (int t = 0; t < trials; ++t) {
    std::vector<Bytes> a, b;
    for (int i = 0; i < 4; ++i) a.push_back(random_bytes(rng, 500));
    b.push_back(random_bytes(rng, 500));
    std::vector<CodedPacket> A = incremental_encode(a, 0, 1);
    std::vector<CodedPacket> B = incremental_encode(b, 1, 1);
    CodedPacket a5 = rlnc_parities(A, 1, rng, 5).front();

    // joint unknowns: four S1 originals then b1
    auto joint = [](const CodedPacket* s1p, const CodedPacket* s2p) {
      Bytes c(5, 0);
      if (s1p) std::copy(s1p->coeffs.begin(), s1p->coeffs.end(), c.begin());
      if (s2p) c[4] ^= s2p->coeffs[0];
      return c;
    };
    auto xor_pay = [](Bytes x, const Bytes& y) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] ^= y[i];
      return x;
    };
    InterCodedPacket d1 = inter_encode({A[0], B[0]}, {1, 2});
    CodedPacket a3a5 = A[2];
    for (std::size_t i = 0; i < 4; ++i) a3a5.coeffs[i] ^= a5.coeffs[i];
    a3a5.payload = xor_pay(A[2].payload, a5.payload);

    std::vector<Bytes> rows = {joint(&A[0], nullptr), joint(&A[1], nullptr), joint(&A[3], nullptr),
                               joint(&A[0], &B[0]), joint(&a3a5, nullptr)};
    std::vector<Bytes> pay = {A[0].payload, A[1].payload, A[3].payload, d1.xor_payload, a3a5.payload};
    DecodeResult r = solve_linear(rows, pay, 5);
    if (r.decoded && r.packets[4] == b[0] && std::equal(a.begin(), a.end(), r.packets.begin())) ++decoded;
  }
  bool ok = counts && decoded >= 990;
  report(9, "relay trace", ok,
         fmt("parities (%d, %d, %d, %d); b1 decoded from five receptions in %d/%d trials", p11, p22, p21, p12,
             decoded, trials));
}

struct Stats {
  double mean = 0, var = 0;
};

Stats sim_stats(const Scenario& sc, const LossMatrix& m, Scheme s, int seeds, double duration) {
  SimConfig c;
  c.scheme = s;
  c.duration = duration;
  std::vector<double> v;
  for (int k = 1; k <= seeds; ++k) v.push_back(run_simulation(sc, m, c, k).total());
  Stats st;
  st.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  for (double x : v) st.var += (x - st.mean) * (x - st.mean);
  if (v.size() > 1) st.var /= static_cast<double>(v.size() - 1);
  return st;
}

void lossless_sim() {
  Scenario sc = build_canonical(CanonicalKind::x);
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  double st = sim_stats(sc, m, Scheme::i2nc_state, 3, 60).mean;
  double sl = sim_stats(sc, m, Scheme::i2nc_stateless, 3, 60).mean;
  double no = sim_stats(sc, m, Scheme::nonc, 3, 60).mean;
  double ratio = sl / no;
  bool ok = ratio >= 1.30 && ratio <= 1.37 && st == sl;
  report(10, "lossless X simulation", ok,
         fmt("i2nc/nonc %.4f, state %.1f stateless %.1f kb/s", ratio, st / 1e3, sl / 1e3));
}

void ordering() {
  Scenario sc = build_canonical(CanonicalKind::x);
  const std::vector<Scheme> order = {Scheme::i2nc_stateless, Scheme::i2nc_state, Scheme::cope, Scheme::nonc};
  std::string bad;
  std::string table;
  for (double r : kRates) {
    LossMatrix m = pattern_loss(sc, LossPattern::all_links, r);
    std::vector<Stats> st;
    for (auto s : order) st.push_back(sim_stats(sc, m, s, 10, 60));
    table += fmt("%s%.1f:", table.empty() ? "" : "; ", r);
    for (const auto& x : st) table += fmt(" %.0f", x.mean / 1e3);
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      double pooled = std::sqrt((st[i].var + st[i + 1].var) / 2);
      if (st[i].mean < st[i + 1].mean - pooled)
        bad += fmt(" %s<%s@%.1f", to_string(order[i]).c_str(), to_string(order[i + 1]).c_str(), r);
    }
  }
  report(11, "scheme ordering under all-link loss", bad.empty(),
         fmt("kb/s stateless state cope nonc: %s; violations:%s", table.c_str(), bad.empty() ? " none" : bad.c_str()));
}

void cope_threshold() {
  Scenario sc = build_canonical(CanonicalKind::x);
  double worst = 0;
  std::string table;
  for (double r : {0.3, 0.4, 0.5}) {
    LossMatrix m = pattern_loss(sc, LossPattern::overhearing_only, r);
    double cope = sim_stats(sc, m, Scheme::cope, 10, 60).mean;
    double no = sim_stats(sc, m, Scheme::nonc, 10, 60).mean;
    worst = std::max(worst, std::abs(cope / no - 1));
    table += fmt("%s%.1f: %.1f%%", table.empty() ? "" : ", ", r, 100 * (cope / no - 1));
  }
  report(12, "cope tracks nonc above its threshold", worst <= 0.03, "cope vs nonc " + table);
}

void determinism() {
  std::vector<std::pair<std::string, std::function<std::string()>>> runs;
  ScenarioSpec o = parse_scenario("[topology]\nkind = cross\n[loss]\nrate = 0.3\n[engine]\nvariant = state stateless nonc\n");
  ScenarioSpec s = parse_scenario(
      "[topology]\nkind = x\n[loss]\nrate = 0.2\n[engine]\nmode = simulate\n"
      "scheme = nonc cope i2nc_state i2nc_stateless\nduration = 5\nseeds = 2\n");
  ScenarioSpec w = s;
  w.sim.traffic = Traffic::window;
  ScenarioSpec c = parse_scenario("[topology]\nkind = x\n[loss]\nrate = 0.3\n[engine]\niters = 2000\n");
  runs.push_back({"optimize", [&] { return run_optimize(o, 1).csv; }});
  runs.push_back({"simulate", [&] { return run_simulate(s, 4).csv; }});
  runs.push_back({"window", [&] { return run_simulate(w, 4).csv; }});
  runs.push_back({"sweep", [&] { return run_sweep(s, {0.0, 0.3}, {}, 2).csv; }});
  runs.push_back({"convergence", [&] { return run_convergence(c).csv; }});
  bool ok = true;
  std::string detail;
  for (auto& [name, f] : runs) {
    std::string a = f(), b = f();
    bool same = a == b && !a.empty();
    ok &= same;
    detail += fmt("%s%s %s (%zu bytes)", detail.empty() ? "" : ", ", name.c_str(), same ? "identical" : "DIFFERENT",
                  a.size());
  }
  report(13, "byte-identical reruns", ok, detail);
}

}  // namespace

int main() {
  lossless_x();
  x_both_lossy();
  x_direct_lossy();
  x_overhearing_lossy();
  x_stateless_sweep();
  cross();
  convergence();
  intra_roundtrip();
  relay_trace();
  lossless_sim();
  ordering();
  cope_threshold();
  determinism();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
