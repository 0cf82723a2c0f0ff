#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <torch/torch.h>

namespace sparsegen {

/// Raised for bad inputs or configuration. The CLI maps it to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for failures while running a valid request (I/O, divergence, ...).
/// The CLI maps it to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Derives an independent seed for a named sub-stream of a run.
/// splitmix64 over (seed, stream, index).
uint64_t derive_seed(uint64_t run_seed, uint64_t stream, uint64_t index = 0);

/// CPU generator seeded deterministically.
at::Generator make_generator(uint64_t seed);

void require_finite(const torch::Tensor& t, const std::string& what);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Shortest round-trip representation of a double, for reproducible reports.
std::string format_double(double v);

// Stream ids used with derive_seed, kept in one place so that no two
// components draw from the same stream by accident.
namespace streams {
inline constexpr uint64_t kInit = 1;
inline constexpr uint64_t kBatchOrder = 2;
inline constexpr uint64_t kGate = 3;
inline constexpr uint64_t kBaseline = 4;
inline constexpr uint64_t kPgd = 5;
inline constexpr uint64_t kWorker = 6;
inline constexpr uint64_t kSample = 7;
inline constexpr uint64_t kData = 8;
}  // namespace streams

}  // namespace sparsegen
