#pragma once

#include <stdexcept>

namespace gkv {

// Caller-supplied data is unusable: bad token ids, malformed graphs, position
// overflow, missing cache blocks.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file failed header, size or consistency checks.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

// The engine broke one of its own contracts.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gkv
