#pragma once

#include <stdexcept>
#include <string>

namespace pslab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularDecompositionFailure : Error {
  using Error::Error;
};

// A required singular-value gap vanished, so the flag projection is undefined.
struct DegenerateGap : Error {
  int root_index;
  explicit DegenerateGap(int j)
      : Error("degenerate singular-value gap at root " + std::to_string(j)),
        root_index(j) {}
};

struct SingularSystem : Error {
  using Error::Error;
};

struct NoWitness : Error {
  using Error::Error;
};

struct DiscretenessSuspect : Error {
  using Error::Error;
};

struct InsufficientRange : Error {
  using Error::Error;
};

struct AllDegenerate : Error {
  using Error::Error;
};

struct NoTransversePairs : Error {
  using Error::Error;
};

struct CoincidentPoints : Error {
  using Error::Error;
};

struct DomainNotPreserved : Error {
  using Error::Error;
};

}  // namespace pslab
