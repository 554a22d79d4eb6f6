#include "siamgcn/common.hpp"

#include <iostream>

namespace siamgcn {

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

}  // namespace siamgcn
