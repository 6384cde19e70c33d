#pragma once

#include <cmath>
#include <optional>

#include "streamkv/core/types.hpp"
#include "streamkv/errors.hpp"

namespace streamkv::pipeline {

// Fixed per-frame token layout: a row-major patch grid, one camera token,
// and whatever is left over as register tokens. Patches occupy positions
// [0, patch_count), then the camera, then registers.
struct FrameLayout {
    int rows = 0;
    int cols = 0;
    int n_camera = 0;
    int n_register = 0;

    int patch_count() const { return rows * cols; }
    int total() const { return patch_count() + n_camera + n_register; }

    static FrameLayout for_tokens(int tokens_per_frame) {
        FrameLayout lay;
        lay.n_camera = 1;
        const int pt = tokens_per_frame - 1;
        if (pt > 0) {
            lay.rows = static_cast<int>(std::floor(std::sqrt(static_cast<double>(pt))));
            lay.cols = pt / lay.rows;
        }
        lay.n_register = tokens_per_frame - 1 - lay.patch_count();
        return lay;
    }

    core::TokenKind kind_of(int i) const {
        if (i < patch_count()) return core::TokenKind::Patch;
        if (i < patch_count() + n_camera) return core::TokenKind::Camera;
        return core::TokenKind::Register;
    }

    std::optional<core::GridPos> grid_of(int i) const {
        if (i >= patch_count()) return std::nullopt;
        return core::GridPos{i / cols, i % cols};
    }
};

}  // namespace streamkv::pipeline
