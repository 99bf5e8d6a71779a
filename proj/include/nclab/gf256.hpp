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
#pragma once

#include <cstddef>
#include <cstdint>

// GF(2^8) with primitive polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11d).
namespace nclab::gf256 {

inline uint8_t add(uint8_t a, uint8_t b) { return a ^ b; }

uint8_t mul(uint8_t a, uint8_t b);
uint8_t div(uint8_t a, uint8_t b);  // b != 0
uint8_t inv(uint8_t a);             // a != 0

// dst[i] ^= c * src[i]
void mul_add(uint8_t* dst, const uint8_t* src, uint8_t c, std::size_t n);
// dst[i] = c * dst[i]
void scale(uint8_t* dst, uint8_t c, std::size_t n);

}  // namespace nclab::gf256
