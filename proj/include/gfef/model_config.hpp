#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gfef {

enum class Construction { kRandomWalk, kKnn };
enum class InputType { kTs = 0, kImg = 1, kExp = 2 };

inline const char* type_name(InputType t) {
    switch (t) {
        case InputType::kTs: return "ts";
        case InputType::kImg: return "img";
        default: return "exp";
    }
}

struct ModelConfig {
    int num_classes = 3;
    int series_length = 101;
    int hidden = 128;  // node feature dimension d
    int layers = 1;
    int patch_len = 8;
    int nodes_per_type = 16;
    int top_k = 12;
    double alpha = 0.5;
    int walk_steps = 1;
    double tau = 1.0;
    bool use_image = true;
    bool use_expert = true;
    bool use_frf = true;
    bool use_dra = true;
    bool dynamic_hyperedges = true;
    Construction construction = Construction::kRandomWalk;
    bool self_attention = false;
    bool normalize_input = true;
    double repeat_eps = 1e-9;

    std::vector<InputType> active_types() const {
        std::vector<InputType> t{InputType::kTs};
        if (use_image) t.push_back(InputType::kImg);
        if (use_expert) t.push_back(InputType::kExp);
        return t;
    }
    int n_types() const { return 1 + (use_image ? 1 : 0) + (use_expert ? 1 : 0); }
    int total_nodes() const { return n_types() * nodes_per_type; }
    int encoder_out() const { return patch_len * nodes_per_type; }

    void validate() const {
        if (patch_len * nodes_per_type != 128)
            throw std::invalid_argument("patch_len * nodes_per_type must equal 128");
        if (top_k > 3 * nodes_per_type - 1)
            throw std::invalid_argument("top_k must be <= 3*nodes_per_type - 1");
        if (top_k > total_nodes() - 1)
            throw std::invalid_argument("top_k must be <= total node count - 1");
        if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
        if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
        if (walk_steps < 0) throw std::invalid_argument("walk_steps must be >= 0");
        if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
        if (hidden < 1 || layers < 1) throw std::invalid_argument("hidden and layers must be >= 1");
        if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
        if (series_length < 8) throw std::invalid_argument("series_length must be >= 8");
    }
};

}  // namespace gfef
