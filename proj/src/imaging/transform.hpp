#pragma once

#include <cmath>

#include "imaging/volume.hpp"

namespace lvo::imaging {

// In-plane rigid motion applied identically to every slice. Convention is
// pull-back: resampling evaluates the input at q = R(theta) * p + t, where
// p is the output voxel centre in millimetres relative to the slice centre.
struct RigidTransform2D {
    double theta = 0.0;  // radians, |theta| <= pi
    double tx = 0.0;     // mm
    double ty = 0.0;     // mm

    RigidTransform2D inverse() const {
        double c = std::cos(theta), s = std::sin(theta);
        // q = R p + t  =>  p = R^-1 (q - t)
        return {-theta, -(c * tx + s * ty), -(-s * tx + c * ty)};
    }

    void map(double px, double py, double& qx, double& qy) const {
        double c = std::cos(theta), s = std::sin(theta);
        qx = c * px - s * py + tx;
        qy = s * px + c * py + ty;
    }
};

// Bilinear sample at continuous voxel coordinates; outside the field of
// view the value is -1000 (air).
double sample_bilinear(const Volume& vol, double fx, double fy, int z);

// Resample every slice under the transform (pull-back, bilinear),
// out-of-field voxels set to -1000.
Volume apply_transform(const Volume& vol, const RigidTransform2D& t);

}  // namespace lvo::imaging
