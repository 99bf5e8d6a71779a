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
#include "nclab/coding.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nclab/gf256.hpp"

namespace nclab {

IncrementalEncoder::IncrementalEncoder(FlowId flow, uint64_t generation, int G)
    : flow_(flow), generation_(generation), G_(G) {
  if (G < 1) throw CodingError("generation size must be >= 1");
}

CodedPacket IncrementalEncoder::push(const Bytes& p) {
  if (count_ >= G_) throw CodingError("generation already complete");
  if (count_ == 0) {
    sum_.assign(p.size(), 0);
  } else if (p.size() != sum_.size()) {
    throw CodingError("payload length mismatch within generation");
  }
  for (std::size_t i = 0; i < p.size(); ++i) sum_[i] ^= p[i];
  CodedPacket a;
  a.flow = flow_;
  a.generation = generation_;
  a.packet_id = static_cast<uint32_t>(count_);
  a.coeffs.assign(G_, 0);
  for (int j = 0; j <= count_; ++j) a.coeffs[j] = 1;
  a.payload = sum_;
  ++count_;
  return a;
}

std::vector<CodedPacket> incremental_encode(const std::vector<Bytes>& packets, FlowId flow,
                                            uint64_t generation) {
  if (packets.empty()) return {};
  IncrementalEncoder enc(flow, generation, static_cast<int>(packets.size()));
  std::vector<CodedPacket> out;
  for (const auto& p : packets) out.push_back(enc.push(p));
  return out;
}

int ceil_count(double v) {
  if (v <= 0) return 0;
  return static_cast<int>(std::ceil(v - 1e-9));
}

ParityCounts parity_counts(int G_alloc, double rho_direct,
                           const std::map<FlowId, double>& rho_antidote,
                           const std::map<FlowId, double>& rho_direct_partner, Variant variant) {
  if (G_alloc < 0) throw CodingError("negative allocation");
  if (rho_direct >= 1.0) throw InfeasibleHyperarc("direct loss of 1 leaves the flow unservable");
  ParityCounts pc;
  pc.self = ceil_count(G_alloc * rho_direct / (1.0 - rho_direct));
  for (const auto& [sp, rho] : rho_antidote) {
    double v = G_alloc * rho;
    if (variant == Variant::stateless) {
      auto it = rho_direct_partner.find(sp);
      if (it == rho_direct_partner.end()) throw CodingError("missing partner direct loss");
      if (it->second >= 1.0) throw InfeasibleHyperarc("partner direct loss of 1");
      v /= 1.0 - it->second;
    }
    pc.cross[sp] = ceil_count(v);
  }
  return pc;
}

std::vector<CodedPacket> rlnc_parities(const std::vector<CodedPacket>& buffer, int n, Rng& rng,
                                       uint32_t first_id) {
  if (n <= 0) return {};
  if (buffer.empty()) throw CodingError("empty generation buffer");
  const std::size_t G = buffer.front().coeffs.size();
  const std::size_t L = buffer.front().payload.size();
  for (const auto& b : buffer)
    if (b.coeffs.size() != G || b.payload.size() != L)
      throw CodingError("inconsistent packets in generation buffer");
  std::vector<CodedPacket> out;
  while (static_cast<int>(out.size()) < n) {
    CodedPacket p;
    p.flow = buffer.front().flow;
    p.generation = buffer.front().generation;
    p.packet_id = first_id + static_cast<uint32_t>(out.size());
    p.coeffs.assign(G, 0);
    p.payload.assign(L, 0);
    for (const auto& b : buffer) {
      auto c = static_cast<uint8_t>(rng() & 0xff);
      gf256::mul_add(p.coeffs.data(), b.coeffs.data(), c, G);
      gf256::mul_add(p.payload.data(), b.payload.data(), c, L);
    }
    if (std::all_of(p.coeffs.begin(), p.coeffs.end(), [](uint8_t v) { return v == 0; })) continue;
    out.push_back(std::move(p));
  }
  return out;
}

DecodeResult solve_linear(const std::vector<Bytes>& coeffs, const std::vector<Bytes>& payloads,
                          int n) {
  if (coeffs.size() != payloads.size()) throw CodingError("coefficient/payload count mismatch");
  DecodeResult res;
  if (coeffs.empty()) return res;
  const std::size_t L = payloads.front().size();
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (static_cast<int>(coeffs[i].size()) != n) throw CodingError("coefficient length mismatch");
    if (payloads[i].size() != L) throw CodingError("inconsistent payload lengths");
  }
  // Augmented rows [coeffs | payload].
  std::vector<Bytes> rows;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    Bytes r = coeffs[i];
    r.insert(r.end(), payloads[i].begin(), payloads[i].end());
    rows.push_back(std::move(r));
  }
  const std::size_t W = n + L;
  int rank = 0;
  std::vector<int> pivot_row(n, -1);
  for (int col = 0; col < n && rank < static_cast<int>(rows.size()); ++col) {
    int sel = -1;
    for (int r = rank; r < static_cast<int>(rows.size()); ++r)
      if (rows[r][col]) {
        sel = r;
        break;
      }
    if (sel < 0) continue;
    std::swap(rows[rank], rows[sel]);
    gf256::scale(rows[rank].data(), gf256::inv(rows[rank][col]), W);
    for (int r = 0; r < static_cast<int>(rows.size()); ++r)
      if (r != rank && rows[r][col])
        gf256::mul_add(rows[r].data(), rows[rank].data(), rows[r][col], W);
    pivot_row[col] = rank;
    ++rank;
  }
  res.rank = rank;
  if (rank < n) return res;
  res.decoded = true;
  for (int col = 0; col < n; ++col)
    res.packets.emplace_back(rows[pivot_row[col]].begin() + n, rows[pivot_row[col]].end());
  return res;
}

DecodeResult intra_decode(const std::vector<CodedPacket>& received, int G) {
  std::vector<Bytes> c, p;
  for (const auto& r : received) {
    if (r.flow != received.front().flow || r.generation != received.front().generation)
      throw CodingError("packets from different generations");
    c.push_back(r.coeffs);
    p.push_back(r.payload);
  }
  return solve_linear(c, p, G);
}

bool RankTracker::add(const Bytes& coeffs) {
  if (static_cast<int>(coeffs.size()) != G_) throw CodingError("coefficient length mismatch");
  if (full()) return false;
  Bytes v = coeffs;
  for (std::size_t r = 0; r < rows_.size(); ++r)
    if (v[pivots_[r]]) gf256::mul_add(v.data(), rows_[r].data(), v[pivots_[r]], v.size());
  int p = -1;
  for (int i = 0; i < G_; ++i)
    if (v[i]) {
      p = i;
      break;
    }
  if (p < 0) return false;
  gf256::scale(v.data(), gf256::inv(v[p]), v.size());
  for (auto& r : rows_)
    if (r[p]) gf256::mul_add(r.data(), v.data(), r[p], r.size());
  rows_.push_back(std::move(v));
  pivots_.push_back(p);
  return true;
}

bool RankTracker::contains(const Bytes& coeffs) const {
  if (static_cast<int>(coeffs.size()) != G_) return false;
  Bytes v = coeffs;
  for (std::size_t r = 0; r < rows_.size(); ++r)
    if (v[pivots_[r]]) gf256::mul_add(v.data(), rows_[r].data(), v[pivots_[r]], v.size());
  return std::all_of(v.begin(), v.end(), [](uint8_t c) { return c == 0; });
}

bool RankTracker::reduce(Bytes& v) const {
  if (static_cast<int>(v.size()) != G_) throw CodingError("coefficient length mismatch");
  bool changed = false;
  for (std::size_t r = 0; r < rows_.size(); ++r)
    if (v[pivots_[r]]) {
      gf256::mul_add(v.data(), rows_[r].data(), v[pivots_[r]], v.size());
      changed = true;
    }
  return changed;
}

int RankTracker::decoded() const {
  std::vector<char> pivot(G_, 0);
  for (int p : pivots_) pivot[p] = 1;
  int n = 0;
  for (const auto& r : rows_) {
    bool solo = true;
    for (int i = 0; i < G_ && solo; ++i)
      if (r[i] && !pivot[i]) solo = false;
    n += solo;
  }
  return n;
}

Bytes RankTracker::combination(Rng& rng) const {
  if (rows_.empty()) return {};
  for (;;) {
    Bytes v(G_, 0);
    for (const auto& r : rows_) gf256::mul_add(v.data(), r.data(), static_cast<uint8_t>(rng() & 0xff), v.size());
    if (std::any_of(v.begin(), v.end(), [](uint8_t c) { return c != 0; })) return v;
  }
}

InterCodedPacket inter_encode(const std::vector<CodedPacket>& xi,
                              const std::vector<NodeId>& next_hops) {
  if (xi.empty()) throw CodingError("empty code set");
  if (next_hops.size() != xi.size()) throw CodingError("one next hop per constituent required");
  std::set<FlowId> flows;
  std::size_t C = 0, L = 0;
  for (const auto& p : xi) {
    if (!flows.insert(p.flow).second) throw CodingError("constituents must have distinct flows");
    C = std::max(C, p.coeffs.size());
    L = std::max(L, p.payload.size());
  }
  InterCodedPacket out;
  out.xor_coeffs.assign(C, 0);
  out.xor_payload.assign(L, 0);
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const auto& p = xi[i];
    out.header.push_back({p.flow, p.generation, p.packet_id,
                          static_cast<uint16_t>(p.coeffs.size()), next_hops[i]});
    out.labels.push_back(p.label);
    for (std::size_t j = 0; j < p.coeffs.size(); ++j) out.xor_coeffs[j] ^= p.coeffs[j];
    for (std::size_t j = 0; j < p.payload.size(); ++j) out.xor_payload[j] ^= p.payload[j];
  }
  return out;
}

InterDecodeResult inter_decode(const InterCodedPacket& coded,
                               const std::vector<CodedPacket>& known) {
  InterDecodeResult res;
  int missing = -1;
  Bytes coeffs = coded.xor_coeffs, payload = coded.xor_payload;
  for (int i = 0; i < coded.count(); ++i) {
    const auto& h = coded.header[i];
    auto it = std::find_if(known.begin(), known.end(), [&](const CodedPacket& k) {
      return k.flow == h.flow && k.generation == h.generation && k.packet_id == h.packet_id;
    });
    if (it == known.end()) {
      ++res.unknown;
      missing = i;
      continue;
    }
    for (std::size_t j = 0; j < it->coeffs.size() && j < coeffs.size(); ++j) coeffs[j] ^= it->coeffs[j];
    for (std::size_t j = 0; j < it->payload.size() && j < payload.size(); ++j) payload[j] ^= it->payload[j];
  }
  if (res.unknown != 1) return res;
  const auto& h = coded.header[missing];
  res.decoded = true;
  res.packet.flow = h.flow;
  res.packet.generation = h.generation;
  res.packet.packet_id = h.packet_id;
  coeffs.resize(h.block_size, 0);
  res.packet.coeffs = std::move(coeffs);
  res.packet.payload = std::move(payload);
  if (missing < static_cast<int>(coded.labels.size())) res.packet.label = coded.labels[missing];
  return res;
}

namespace {

template <typename T>
void put(Bytes& b, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) b.push_back(static_cast<uint8_t>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get(const Bytes& b, std::size_t& pos) {
  if (pos + sizeof(T) > b.size()) throw CodingError("truncated header");
  uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(b[pos + i]) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace

Bytes write_intra_header(const CodedPacket& p) {
  Bytes b;
  put<uint64_t>(b, p.generation);
  put<uint32_t>(b, p.packet_id);
  put<uint16_t>(b, static_cast<uint16_t>(p.coeffs.size()));
  b.insert(b.end(), p.coeffs.begin(), p.coeffs.end());
  return b;
}

CodedPacket read_intra_header(const Bytes& b) {
  std::size_t pos = 0;
  CodedPacket p;
  p.generation = get<uint64_t>(b, pos);
  p.packet_id = get<uint32_t>(b, pos);
  auto G = get<uint16_t>(b, pos);
  if (pos + G > b.size()) throw CodingError("truncated header");
  p.coeffs.assign(b.begin() + pos, b.begin() + pos + G);
  return p;
}

Bytes write_inter_header(const InterCodedPacket& p) {
  if (p.count() > 255) throw CodingError("too many constituents");
  Bytes b;
  put<uint8_t>(b, static_cast<uint8_t>(p.count()));
  for (const auto& c : p.header) {
    put<uint32_t>(b, static_cast<uint32_t>(c.flow));
    put<uint64_t>(b, c.generation);
    put<uint32_t>(b, c.packet_id);
    put<uint16_t>(b, c.block_size);
    put<uint32_t>(b, static_cast<uint32_t>(c.next_hop));
  }
  return b;
}

std::vector<Constituent> read_inter_header(const Bytes& b) {
  std::size_t pos = 0;
  auto n = get<uint8_t>(b, pos);
  std::vector<Constituent> out;
  for (int i = 0; i < n; ++i) {
    Constituent c;
    c.flow = static_cast<FlowId>(get<uint32_t>(b, pos));
    c.generation = get<uint64_t>(b, pos);
    c.packet_id = get<uint32_t>(b, pos);
    c.block_size = get<uint16_t>(b, pos);
    c.next_hop = static_cast<NodeId>(get<uint32_t>(b, pos));
    out.push_back(c);
  }
  return out;
}

}  // namespace nclab
