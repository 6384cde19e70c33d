#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "streamkv/errors.hpp"
#include "streamkv/matrix.hpp"

namespace streamkv::core {

enum class TokenKind : std::uint8_t { Patch, Camera, Register };

struct GridPos {
    int row = 0;
    int col = 0;
    bool operator==(const GridPos&) const = default;
};

using TokenId = std::uint64_t;

// One cached token. Immutable after construction except through LayerCache
// mutation (merge bookkeeping).
struct TokenRecord {
    TokenId token_id = 0;
    int frame_index = 0;
    TokenKind kind = TokenKind::Patch;
    std::optional<GridPos> grid_pos;  // present iff kind == Patch
    Vec key;
    Vec value;
    double raw_score = 0.0;
    double enhanced_score = 0.0;
    bool protected_flag = false;
    std::uint32_t absorbed_count = 0;

    bool consistent() const {
        if (key.size() != value.size() || key.empty()) return false;
        if (raw_score < 0.0 || enhanced_score < 0.0) return false;
        if ((kind == TokenKind::Patch) != grid_pos.has_value()) return false;
        return true;
    }
};

// Ordered per-layer token store. Single-writer per layer; insertion order of
// surviving tokens is preserved across compression steps.
struct LayerCache {
    int layer_index = 0;
    std::vector<TokenRecord> entries;
    std::size_t budget = 0;

    std::size_t size() const { return entries.size(); }
    bool within_budget() const { return entries.size() <= budget; }
};

// Monotonic token-id source, one per simulation run.
class TokenIdAllocator {
public:
    TokenId next() { return next_++; }
    TokenId peek() const { return next_; }

private:
    TokenId next_ = 0;
};

}  // namespace streamkv::core
