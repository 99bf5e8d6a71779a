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
#include "nclab/scenario_file.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace nclab {

ScenarioError::ScenarioError(int l, const std::string& msg)
    : std::runtime_error("line " + std::to_string(l) + ": " + msg), line(l) {}

namespace {

struct Entry {
  int line;
  std::string key;
  std::string value;
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// comma or whitespace separated
std::vector<std::string> list(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  return words(t);
}

double to_double(const Entry& e, const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ScenarioError(e.line, "'" + e.key + "' expects a number, got '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v))
    throw ScenarioError(e.line, "'" + e.key + "' expects a number, got '" + s + "'");
  return v;
}

double to_double(const Entry& e) { return to_double(e, e.value); }

long to_long(const Entry& e) {
  double v = to_double(e);
  if (v != std::floor(v) || std::fabs(v) > 1e15)
    throw ScenarioError(e.line, "'" + e.key + "' expects an integer, got '" + e.value + "'");
  return static_cast<long>(v);
}

double probability(const Entry& e, const std::string& s) {
  double v = to_double(e, s);
  if (v < 0.0 || v > 1.0) throw ScenarioError(e.line, "probability " + s + " outside [0,1]");
  return v;
}

template <class F>
auto wrap(const Entry& e, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ScenarioError(e.line, ex.what());
  }
}

using Section = std::vector<Entry>;

const std::set<std::string> kTopologyKeys = {"kind", "wheel_flows", "capacity", "generation_size",
                                             "max_code_size", "gamma", "interference", "node",
                                             "link", "flow", "clique"};
const std::set<std::string> kLossKeys = {"rate", "pattern", "link"};
const std::set<std::string> kEngineKeys = {
    "mode", "variant", "scheme",
    // optimizer
    "step_q", "step_alpha", "step_tau", "schedule", "schedule_T", "damping", "iters", "tol", "window",
    "x_cap",
    // simulator
    "duration", "seeds", "traffic", "cbr_interval", "generation_size", "cope_threshold",
    "decodability_threshold", "scheduler", "queue_capacity", "slot", "payload_bytes", "report_slots",
    "window_init", "window_max", "window_rto", "warmup"};
const std::set<std::string> kRepeatable = {"node", "link", "flow", "clique"};

NodeId node_ref(const Topology& topo, const Entry& e, const std::string& name) {
  if (!topo.has_node(name)) throw ScenarioError(e.line, "undefined node '" + name + "'");
  return topo.node_id(name);
}

Scenario build_topology(const Section& sec, int header_line) {
  std::map<std::string, const Entry*> one;
  for (const auto& e : sec)
    if (!kRepeatable.count(e.key)) one[e.key] = &e;
  auto get = [&](const std::string& k) -> const Entry* {
    auto it = one.find(k);
    return it == one.end() ? nullptr : it->second;
  };

  CanonicalParams cp;
  if (auto e = get("wheel_flows")) cp.wheel_flows = static_cast<int>(to_long(*e));
  if (auto e = get("capacity")) cp.capacity = to_double(*e);
  if (auto e = get("generation_size")) cp.generation_size = static_cast<int>(to_long(*e));
  if (auto e = get("max_code_size")) cp.max_code_size = static_cast<int>(to_long(*e));
  if (auto e = get("gamma")) cp.gamma = to_double(*e);
  if (cp.capacity <= 0) throw ScenarioError(get("capacity")->line, "capacity must be positive");
  if (cp.generation_size < 1 || cp.generation_size > 255)
    throw ScenarioError(get("generation_size")->line, "generation_size must be in [1,255]");

  const Entry* kind = get("kind");
  std::string k = kind ? kind->value : "explicit";
  if (k != "explicit") {
    for (const auto& e : sec)
      if (kRepeatable.count(e.key) || e.key == "interference")
        throw ScenarioError(e.line, "'" + e.key + "' only applies to kind = explicit");
    return wrap(*kind, [&] { return build_canonical(parse_canonical_kind(k), cp); });
  }

  Scenario sc;
  for (const auto& e : sec)
    if (e.key == "node")
      for (const auto& n : words(e.value)) {
        if (sc.topo.has_node(n)) throw ScenarioError(e.line, "node '" + n + "' defined twice");
        sc.topo.add_node(n);
      }
  if (sc.topo.num_nodes() == 0) throw ScenarioError(header_line, "explicit topology without nodes");
  for (const auto& e : sec) {
    if (e.key != "link") continue;
    auto w = words(e.value);
    if (w.size() != 2 && w.size() != 3) throw ScenarioError(e.line, "link expects: from to [capacity]");
    NodeId a = node_ref(sc.topo, e, w[0]);
    NodeId b = node_ref(sc.topo, e, w[1]);
    double c = w.size() == 3 ? to_double(e, w[2]) : cp.capacity;
    if (c <= 0) throw ScenarioError(e.line, "link capacity must be positive");
    wrap(e, [&] { sc.topo.add_link(a, b, c); });
  }
  for (const auto& e : sec) {
    if (e.key != "flow") continue;
    auto w = words(e.value);
    if (w.size() < 3) throw ScenarioError(e.line, "flow expects: name node node [node...]");
    std::vector<std::string> path(w.begin() + 1, w.end());
    for (const auto& n : path) node_ref(sc.topo, e, n);
    FlowId id = static_cast<FlowId>(sc.flows.size());
    sc.flows.push_back(wrap(e, [&] { return make_flow(sc.topo, id, w[0], path, cp.generation_size); }));
  }
  if (sc.flows.empty()) throw ScenarioError(header_line, "explicit topology without flows");

  Interference mode = Interference::single_clique;
  if (auto e = get("interference")) {
    if (e->value == "single_clique")
      mode = Interference::single_clique;
    else if (e->value == "all_in_range")
      mode = Interference::all_in_range;
    else
      throw ScenarioError(e->line, "unknown interference '" + e->value + "'");
  }
  wrap(sec.front(), [&] { finalize_scenario(sc, mode, cp.gamma, cp.max_code_size); });

  std::vector<std::vector<int>> cliques;
  for (const auto& e : sec) {
    if (e.key != "clique") continue;
    std::vector<int> cl;
    for (const auto& n : words(e.value)) {
      NodeId id = node_ref(sc.topo, e, n);
      auto it = std::find_if(sc.hyperarcs.begin(), sc.hyperarcs.end(),
                             [&](const Hyperarc& h) { return h.transmitter == id; });
      if (it == sc.hyperarcs.end()) throw ScenarioError(e.line, "node '" + n + "' never transmits");
      cl.push_back(it->id);
    }
    if (cl.empty()) throw ScenarioError(e.line, "empty clique");
    std::sort(cl.begin(), cl.end());
    cliques.push_back(cl);
  }
  if (!cliques.empty()) sc.conflicts.cliques = cliques;
  sc.kind = "explicit";
  return sc;
}

void apply_loss(ScenarioSpec& spec, const Section& sec) {
  const Topology& topo = spec.scenario.topo;
  for (const auto& e : sec) {
    if (e.key == "rate") {
      spec.rate = probability(e, e.value);
      if (*spec.rate >= 1.0) throw ScenarioError(e.line, "uniform rate must be below 1");
    } else if (e.key == "pattern") {
      spec.pattern = wrap(e, [&] { return parse_loss_pattern(e.value); });
    } else if (e.key == "link") {
      auto w = words(e.value);
      if (w.size() != 3) throw ScenarioError(e.line, "link expects: from to rho");
      NodeId a = node_ref(topo, e, w[0]);
      NodeId b = node_ref(topo, e, w[1]);
      if (!topo.has_link(a, b)) throw ScenarioError(e.line, "no link " + w[0] + " -> " + w[1]);
      spec.link_loss.push_back({{a, b}, probability(e, w[2])});
    }
  }
}

void apply_engine(ScenarioSpec& spec, const Section& sec) {
  OptimizerConfig& o = spec.opt;
  SimConfig& s = spec.sim;
  for (const auto& e : sec) {
    const std::string& k = e.key;
    if (k == "mode") {
      if (e.value == "optimize")
        spec.engine = Engine::optimize;
      else if (e.value == "simulate")
        spec.engine = Engine::simulate;
      else
        throw ScenarioError(e.line, "mode must be optimize or simulate");
    } else if (k == "variant") {
      spec.variants.clear();
      for (const auto& v : list(e.value)) spec.variants.push_back(wrap(e, [&] { return parse_variant(v); }));
      if (spec.variants.empty()) throw ScenarioError(e.line, "empty variant list");
    } else if (k == "scheme") {
      spec.schemes.clear();
      for (const auto& v : list(e.value)) spec.schemes.push_back(wrap(e, [&] { return parse_scheme(v); }));
      if (spec.schemes.empty()) throw ScenarioError(e.line, "empty scheme list");
    } else if (k == "step_q") {
      o.step_q = to_double(e);
    } else if (k == "step_alpha") {
      o.step_alpha = to_double(e);
    } else if (k == "step_tau") {
      o.step_tau = to_double(e);
    } else if (k == "schedule") {
      if (e.value == "constant")
        o.schedule = StepSchedule::constant;
      else if (e.value == "diminishing")
        o.schedule = StepSchedule::diminishing;
      else
        throw ScenarioError(e.line, "schedule must be constant or diminishing");
    } else if (k == "schedule_T") {
      o.schedule_T = to_double(e);
    } else if (k == "damping") {
      o.damping = to_double(e);
    } else if (k == "iters") {
      o.max_iters = to_long(e);
      if (o.max_iters < 0) throw ScenarioError(e.line, "iters must be non-negative");
    } else if (k == "tol") {
      o.tol = to_double(e);
    } else if (k == "window") {
      o.window = static_cast<int>(to_long(e));
    } else if (k == "x_cap") {
      o.x_cap = to_double(e);
    } else if (k == "duration") {
      s.duration = to_double(e);
    } else if (k == "seeds") {
      s.seeds = static_cast<int>(to_long(e));
    } else if (k == "traffic") {
      s.traffic = wrap(e, [&] { return parse_traffic(e.value); });
    } else if (k == "cbr_interval") {
      s.cbr_interval = to_double(e);
    } else if (k == "generation_size") {
      s.generation_size = static_cast<int>(to_long(e));
    } else if (k == "cope_threshold") {
      s.cope_threshold = probability(e, e.value);
    } else if (k == "decodability_threshold") {
      s.decodability_threshold = probability(e, e.value);
    } else if (k == "scheduler") {
      s.scheduler = wrap(e, [&] { return parse_scheduler(e.value); });
    } else if (k == "queue_capacity") {
      s.queue_capacity = static_cast<int>(to_long(e));
    } else if (k == "slot") {
      s.slot = to_double(e);
    } else if (k == "payload_bytes") {
      s.payload_bytes = static_cast<int>(to_long(e));
    } else if (k == "report_slots") {
      s.report_slots = to_double(e);
    } else if (k == "window_init") {
      s.window_init = static_cast<int>(to_long(e));
    } else if (k == "window_max") {
      s.window_max = static_cast<int>(to_long(e));
    } else if (k == "window_rto") {
      s.window_rto = to_long(e);
    } else if (k == "warmup") {
      s.warmup = to_double(e);
    }
  }
  const Entry& anchor = sec.empty() ? Entry{1, "", ""} : sec.front();
  wrap(anchor, [&] { s.validate(); });
}

}  // namespace

LossMatrix ScenarioSpec::loss(std::optional<double> rate_override) const {
  std::optional<double> r = rate_override ? rate_override : rate;
  LossMatrix m = r ? pattern_loss(scenario, pattern, *r) : LossMatrix::uniform(scenario.topo, 0.0);
  for (const auto& [link, rho] : link_loss) m.set(link.first, link.second, rho);
  return m;
}

ScenarioSpec parse_scenario(const std::string& text) {
  std::map<std::string, Section> sections;
  std::map<std::string, int> header;
  std::string current;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  int entries = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw.substr(0, raw.find('#'));
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ScenarioError(line, "unterminated section header");
      current = trim(s.substr(1, s.size() - 2));
      if (current != "topology" && current != "loss" && current != "engine")
        throw ScenarioError(line, "unknown section [" + current + "]");
      if (header.count(current)) throw ScenarioError(line, "section [" + current + "] repeated");
      header[current] = line;
      sections[current];
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ScenarioError(line, "expected key = value");
    if (current.empty()) throw ScenarioError(line, "key outside of a section");
    Entry e{line, trim(s.substr(0, eq)), trim(s.substr(eq + 1))};
    if (e.key.empty()) throw ScenarioError(line, "missing key");
    if (e.value.empty()) throw ScenarioError(line, "missing value for '" + e.key + "'");
    const auto& allowed = current == "topology" ? kTopologyKeys : current == "loss" ? kLossKeys : kEngineKeys;
    if (!allowed.count(e.key)) throw ScenarioError(line, "unknown key '" + e.key + "' in [" + current + "]");
    bool repeatable = kRepeatable.count(e.key) && current != "engine";
    if (!repeatable)
      for (const auto& prev : sections[current])
        if (prev.key == e.key) throw ScenarioError(line, "'" + e.key + "' repeated");
    sections[current].push_back(e);
    ++entries;
  }
  if (entries == 0 && header.empty()) throw ScenarioError(1, "empty scenario");
  if (!header.count("topology")) throw ScenarioError(1, "missing [topology] section");

  ScenarioSpec spec;
  spec.scenario = build_topology(sections["topology"], header["topology"]);
  if (sections.count("loss")) apply_loss(spec, sections["loss"]);
  if (sections.count("engine")) apply_engine(spec, sections["engine"]);
  // rebuild once so pattern errors surface while the line is known
  if (spec.rate) {
    const Section& ls = sections["loss"];
    auto it = std::find_if(ls.begin(), ls.end(), [](const Entry& e) { return e.key == "rate"; });
    wrap(*it, [&] { (void)spec.loss(); });
  }
  return spec;
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace nclab
