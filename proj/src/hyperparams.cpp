#include "spcut/hyperparams.hpp"

#include "spcut/errors.hpp"

namespace spcut {

void HyperParams::validate() const {
    auto reject = [](const std::string& key, const std::string& why) {
        throw UsageError("invalid value for " + key + ": " + why);
    };
    if (k < 2) reject("k", "partition count must be >= 2");
    if (sigma <= 0) reject("sigma", "must be positive");
    if (d < 0) reject("d", "must be positive (or omitted to derive per image)");
    if (alpha < 0) reject("alpha", "must be non-negative");
    if (beta < 0) reject("beta", "must be non-negative (or omitted to derive per image)");
    if (t < 1) reject("t", "iteration count must be >= 1");
    if (lr <= 0) reject("lr", "must be positive");
    if (momentum < 0 || momentum >= 1) reject("momentum", "must lie in [0, 1)");
    if (lambda < 0) reject("lambda", "must be non-negative");
    if (adam_lr <= 0) reject("adam-lr", "must be positive");
    if (epochs < 1) reject("epochs", "must be >= 1");
    if (batch < 1) reject("batch", "must be >= 1");
    if (crop < 1) reject("crop", "must be >= 1");
    if (c1 < 1 || c2 < 1 || c3 < 1) reject("channels", "widths must be >= 1");
}

} // namespace spcut
