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
#include <doctest.h>

#include <cmath>

#include "nclab/lossmodel.hpp"

using namespace nclab;

namespace {

NodeId id(const Scenario& sc, const char* n) { return sc.topo.node_id(n); }

}  // namespace

TEST_CASE("direct loss is the link to the next hop") {
  Scenario sc = build_canonical(CanonicalKind::x);
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  m.set(id(sc, "I"), id(sc, "A2"), 0.3);
  CHECK(direct_loss(sc, m, 2, 0) == doctest::Approx(0.3));
  CHECK(direct_loss(sc, m, 2, 1) == 0.0);
  CHECK_THROWS(direct_loss(sc, m, 0, 1));  // S2 never leaves A1

  LossMatrix empty;
  CHECK(direct_loss(sc, empty, 2, 0) == 1.0);  // absent link
}

TEST_CASE("antidote loss follows the overhearing link") {
  Scenario sc = build_canonical(CanonicalKind::x);
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  m.set(id(sc, "A1"), id(sc, "B2"), 0.25);
  m.set(id(sc, "B1"), id(sc, "A2"), 0.4);
  const int pair = 4;
  CHECK(antidote_loss(sc, m, pair, 1, 0) == doctest::Approx(0.25));
  CHECK(antidote_loss(sc, m, pair, 0, 1) == doctest::Approx(0.4));
  CHECK(antidote_loss(sc, m, pair, 0, 0) == 0.0);
  CHECK_THROWS(antidote_loss(sc, m, 2, 0, 1));  // singleton code
}

TEST_CASE("antidote loss is zero when the next hop sent the antidote") {
  // two-way relay: S2's next hop is S1's own previous hop
  Scenario sc = build_canonical(CanonicalKind::cross);
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.7);
  CHECK(antidote_loss(sc, m, 6, 1, 0) == 0.0);
  CHECK(antidote_loss(sc, m, 7, 2, 0) == doctest::Approx(0.7));
}

TEST_CASE("named patterns") {
  Scenario sc = build_canonical(CanonicalKind::x);
  PatternLinks pl = pattern_links(sc);
  CHECK(pl.direct == std::make_pair(id(sc, "I"), id(sc, "B2")));
  CHECK(pl.overhearing == std::make_pair(id(sc, "A1"), id(sc, "B2")));

  LossMatrix both = pattern_loss(sc, LossPattern::both, 0.3);
  for (const auto& [link, rho] : both.entries()) {
    bool lossy = link == pl.direct || link == pl.overhearing;
    CHECK(rho == doctest::Approx(lossy ? 0.3 : 0.0));
  }
  LossMatrix d = pattern_loss(sc, LossPattern::direct_only, 0.5);
  CHECK(d.get(pl.direct.first, pl.direct.second) == 0.5);
  CHECK(d.get(pl.overhearing.first, pl.overhearing.second) == 0.0);
  LossMatrix o = pattern_loss(sc, LossPattern::overhearing_only, 0.5);
  CHECK(o.get(pl.direct.first, pl.direct.second) == 0.0);
  CHECK(o.get(pl.overhearing.first, pl.overhearing.second) == 0.5);
  LossMatrix a = pattern_loss(sc, LossPattern::all_links, 0.2);
  for (const auto& l : sc.topo.links()) CHECK(a.get(l.from, l.to) == 0.2);

  for (auto p : {LossPattern::overhearing_only, LossPattern::direct_only, LossPattern::both, LossPattern::all_links})
    CHECK(parse_loss_pattern(to_string(p)) == p);
  CHECK_THROWS(parse_loss_pattern("none"));
}

TEST_CASE("loss matrix rejects probabilities outside [0,1]") {
  LossMatrix m;
  CHECK_THROWS_AS(m.set(0, 1, 1.5), std::out_of_range);
  CHECK_THROWS_AS(m.set(0, 1, -0.1), std::out_of_range);
  CHECK_THROWS_AS(m.set(0, 1, std::nan("")), std::out_of_range);
  m.set(0, 1, 1.0);
  CHECK(m.get(0, 1) == 1.0);
}

TEST_CASE("generation samples") {
  CHECK(generation_loss_sample(15, 15) == 0.0);
  CHECK(generation_loss_sample(18, 15) == 0.0);
  CHECK(generation_loss_sample(12, 15) == doctest::Approx(0.2));
  CHECK(generation_loss_sample(0, 15) == 1.0);

  LossEstimator e;
  CHECK(e.estimate() == 0.0);
  CHECK(record_generation(e, 18, 15, 15) == 0.0);
  // newest 0.2, older 0.0: (0.2 * 1 + 0 * 1/2) / (1 + 1/2)
  CHECK(record_generation(e, 15, 12, 15) == doctest::Approx(0.2 / 1.5));
  CHECK(e.estimate() == doctest::Approx(0.1333).epsilon(1e-3));
  CHECK_THROWS(record_generation(e, 10, 11, 15));
}

TEST_CASE("estimator window") {
  LossEstimator e;
  CHECK(e.add_sample(0.4) == doctest::Approx(0.4));  // single sample
  for (int i = 0; i < 20; ++i) e.add_sample(i % 2 ? 0.1 : 0.3);
  CHECK(e.size() == LossEstimator::kWindow);
  double est = e.estimate();
  CHECK(est >= 0.1);
  CHECK(est <= 0.3);
  // weights 1/n normalised: recompute by hand
  double num = 0, den = 0;
  for (std::size_t n = 0; n < e.samples().size(); ++n) {
    num += e.samples()[n] / static_cast<double>(n + 1);
    den += 1.0 / static_cast<double>(n + 1);
  }
  CHECK(est == doctest::Approx(num / den));
}

TEST_CASE("draws follow the link probability") {
  Scenario sc = build_canonical(CanonicalKind::x);
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.3);
  Rng rng(7);
  long lost = 0;
  const long n = 100000;
  NodeId a = id(sc, "A1"), b = id(sc, "B2");
  for (long i = 0; i < n; ++i) lost += draw(rng, m, a, b) ? 0 : 1;
  CHECK(std::fabs(static_cast<double>(lost) / n - 0.3) < 0.01);

  Rng r1(3), r2(3);
  for (int i = 0; i < 100; ++i) CHECK(draw(r1, m, a, b) == draw(r2, m, a, b));
  LossMatrix z = LossMatrix::uniform(sc.topo, 0.0);
  LossMatrix one = LossMatrix::uniform(sc.topo, 1.0);
  for (int i = 0; i < 100; ++i) {
    CHECK(draw(rng, z, a, b));
    CHECK_FALSE(draw(rng, one, a, b));
  }
}
