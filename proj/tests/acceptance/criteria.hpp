#pragma once

#include <string>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Loss identities, evaluated with the double-precision core.
Outcome loss_identities();

}  // namespace acceptance
