#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace icat {

// Base class for every error the library raises deliberately. Subclasses
// exist so callers can catch one failure class without string-matching.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// embed
class EmptyTextError : public Error {
 public:
  using Error::Error;
};
class BackendUnavailableError : public Error {
 public:
  using Error::Error;
};
class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

// gauss
class NotSymmetricError : public Error {
 public:
  using Error::Error;
};

// select
class EmptyPoolError : public Error {
 public:
  using Error::Error;
};
class UnknownExemplarIdError : public Error {
 public:
  using Error::Error;
};
class CoverageUnsatisfiedError : public Error {
 public:
  using Error::Error;
};
class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

// data
class ParseError : public Error {
 public:
  using Error::Error;
};
class SchemaError : public Error {
 public:
  using Error::Error;
};

// prompt
class PayloadMismatchError : public Error {
 public:
  using Error::Error;
};
class TokenBudgetExceededError : public Error {
 public:
  using Error::Error;
};

// llm
class ReplayMissError : public Error {
 public:
  using Error::Error;
};
class BudgetExceededError : public Error {
 public:
  using Error::Error;
};

// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

// FNV-1a, 64 bit. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view data);

// splitmix64-style combiner for deriving child seeds.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

// Whole-file read; throws icat::Error on failure.
std::string read_file(const std::filesystem::path& path);

// Write via temp file + rename so concurrent readers never observe a
// partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

// Deterministic RNG with explicitly specified output mappings. mt19937_64 is
// pinned by the standard; the uniform/bounded mappings below are ours, so the
// stream is reproducible across standard libraries (std::*_distribution is not).
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
  }

  // Uniform in [-1, 1).
  double uniform_pm1() { return 2.0 * uniform() - 1.0; }

  // Uniform integer in [0, n), rejection-sampled so there is no modulo bias.
  std::uint64_t bounded(std::uint64_t n);

 private:
  std::mt19937_64 eng_;
};

}  // namespace icat
