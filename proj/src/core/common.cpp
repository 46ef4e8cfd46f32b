// Copyright 2026 The DopeSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dopeseg/common.hpp"

#include <cstdio>

namespace dopeseg {

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

std::string_view to_string(Domain d) { return d == Domain::kNA ? "NA" : "WA"; }

std::string_view to_string(Plane p) {
  switch (p) {
    case Plane::kAxial:
      return "axial";
    case Plane::kCoronal:
      return "coronal";
    case Plane::kSagittal:
      return "sagittal";
  }
  return "?";
}

Domain parse_domain(std::string_view s) {
  if (s == "NA") return Domain::kNA;
  if (s == "WA") return Domain::kWA;
  fail(ErrorCode::kValidation, "unknown domain '" + std::string(s) + "'");
}

Plane parse_plane(std::string_view s) {
  if (s == "axial") return Plane::kAxial;
  if (s == "coronal") return Plane::kCoronal;
  if (s == "sagittal") return Plane::kSagittal;
  fail(ErrorCode::kValidation, "unknown plane '" + std::string(s) + "'");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return mix64(seed ^ mix64(fnv1a64(tag)));
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dopeseg
