#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfedavg {

// Invalid specs, dimension mismatches, bad hyper-parameters.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Empty shards and other data-side violations.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed binary input (bad magic, unknown layout).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Payload shorter or longer than the header promises.
struct LengthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wrong number of payloads at aggregation.
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values during training; carries where it happened.
struct DivergenceError : std::runtime_error {
  std::size_t round = 0;
  std::size_t worker = 0;
  std::size_t step = 0;

  DivergenceError(const std::string& what, std::size_t round_, std::size_t worker_,
                  std::size_t step_)
      : std::runtime_error(what), round(round_), worker(worker_), step(step_) {}
};

}  // namespace cfedavg
