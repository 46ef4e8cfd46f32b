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

// Shared vocabulary: error type, domain/plane tags, seed derivation and
// content hashing.

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dopeseg {

enum class ErrorCode {
  kInvalidArgument = 1,
  kValidation,
  kShape,
  kIo,
  kNumeric,
  kNotFound,
  kAlreadyExists,
  kPartialFailure,
  kInternal,
};

/// Every failure raised by the core library carries one of the codes above so
/// the C API can map it onto a status value without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

enum class Domain { kNA, kWA };
enum class Plane { kAxial, kCoronal, kSagittal };

std::string_view to_string(Domain d);
std::string_view to_string(Plane p);
Domain parse_domain(std::string_view s);
Plane parse_plane(std::string_view s);

// 64-bit content hashing (FNV-1a) and seed mixing (splitmix64 finalizer).
// Derived seeds are order independent: derive_seed(s, "a") never depends on
// which other seeds were derived first.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::string hash_hex(std::uint64_t h);

using Rng = std::mt19937_64;

}  // namespace dopeseg
