#pragma once

#include <stdexcept>
#include <string>

namespace aflab {

// Shape/dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed caller input: out-of-range ids, too-short sequences, bad configs.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Target cannot be aligned to the given number of frames under CTC rules.
class AlignmentInfeasibleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File format problems: bad magic, unknown version, truncated payloads.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged (NaN/inf loss) or otherwise cannot continue.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aflab
