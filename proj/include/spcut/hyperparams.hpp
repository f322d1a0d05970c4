#pragma once

#include <string>

namespace spcut {

/// All numeric knobs for the two training stages. `d` and `beta` default to 0,
/// meaning "derive per image": d = 2*sqrt(N/M) and beta = 5/M^2.
struct HyperParams {
    // partitioning
    int k = 32;           // partition count
    double sigma = 10.0;  // similarity scale
    double d = 0.0;       // spatial gate in pixels (0 = auto)
    double alpha = 1.0;   // pixel-classification loss weight
    double beta = 0.0;    // cut loss weight (0 = auto)
    int t = 128;          // partition-refinement iterations
    double lr = 5e-2;     // SGD learning rate for the refinement
    double momentum = 0.9;

    // autoencoder
    double lambda = 1.0;  // template-regularizer weight
    double adam_lr = 1e-3;
    int epochs = 100;
    int batch = 10;
    int crop = 300;
    bool augment = true;
    int c1 = 64, c2 = 128, c3 = 256; // encoder widths

    /// Throws UsageError naming the offending key when a value is out of range.
    void validate() const;
};

} // namespace spcut
