// SPDX-License-Identifier: Apache-2.0
#include "maven/random.hpp"

#include <sstream>

namespace maven {

Tensor Rng::normal_tensor(Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = normal();
    return t;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw std::invalid_argument("rng: malformed state string");
}

}  // namespace maven
