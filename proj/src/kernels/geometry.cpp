#include "rramft/error.hpp"
#include "rramft/kernels.hpp"

#include <string>

namespace rramft {

void ConvGeometry::validate() const {
    auto fail = [&](const std::string& why) {
        throw ShapeError("invalid convolution geometry: " + why);
    };
    if (batch == 0 || in_channels == 0 || out_channels == 0) fail("zero batch or channel count");
    if (kernel == 0 || stride == 0) fail("kernel and stride must be >= 1");
    if (groups == 0 || in_channels % groups != 0 || out_channels % groups != 0) {
        fail("groups " + std::to_string(groups) + " must divide channels " +
             std::to_string(in_channels) + "->" + std::to_string(out_channels));
    }
    if (height + 2 * padding < kernel || width + 2 * padding < kernel) {
        fail("kernel " + std::to_string(kernel) + " larger than padded input " +
             std::to_string(height) + "x" + std::to_string(width));
    }
}

} // namespace rramft
