#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bbm/error.hpp"

namespace bbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Time-by-location data matrix. kept_mask records, in original scan indices,
// which volumes survive censoring; it always has exactly data.rows() true
// entries.
struct BoldMatrix {
    Matrix data;  // T x V
    double tr_seconds = 1.0;
    std::vector<bool> kept_mask;
    std::string subject_id;
    std::string session_id;

    Eigen::Index t_count() const { return data.rows(); }
    Eigen::Index v_count() const { return data.cols(); }

    void reset_mask() { kept_mask.assign(static_cast<std::size_t>(data.rows()), true); }

    void validate() const {
        if (data.rows() < 2 || data.cols() < 2)
            throw ValidationError("BoldMatrix: need T >= 2 and V >= 2, got " +
                                  std::to_string(data.rows()) + " x " +
                                  std::to_string(data.cols()));
        if (!data.allFinite()) throw ValidationError("BoldMatrix: non-finite entries");
        if (!(tr_seconds > 0.0)) throw ValidationError("BoldMatrix: tr_seconds must be > 0");
        std::size_t kept = 0;
        for (bool k : kept_mask) kept += k ? 1 : 0;
        if (kept != static_cast<std::size_t>(data.rows()))
            throw ValidationError("BoldMatrix: kept_mask marks " + std::to_string(kept) +
                                  " volumes but data has " + std::to_string(data.rows()) +
                                  " rows");
    }
};

enum class TemplateKind { Parcellation, ContinuousMaps };

// Group-level definition of the Q networks: hard labels over locations
// (0 = unassigned) or Q continuous maps.
struct NetworkTemplate {
    TemplateKind kind = TemplateKind::ContinuousMaps;
    IntVector labels;  // V entries in 0..Q (Parcellation)
    Matrix maps;       // Q x V (ContinuousMaps)
    std::vector<std::string> network_names;

    int q_count() const {
        if (kind == TemplateKind::ContinuousMaps) return static_cast<int>(maps.rows());
        return labels.size() == 0 ? 0 : labels.maxCoeff();
    }
    Eigen::Index v_count() const {
        return kind == TemplateKind::ContinuousMaps ? maps.cols() : labels.size();
    }

    void validate() const {
        if (kind == TemplateKind::Parcellation) {
            const int q = q_count();
            if (q < 1) throw ValidationError("template: parcellation has no networks");
            std::vector<long> counts(static_cast<std::size_t>(q) + 1, 0);
            for (Eigen::Index v = 0; v < labels.size(); ++v) {
                const int l = labels[v];
                if (l < 0 || l > q)
                    throw ValidationError("template: label out of range at location " +
                                          std::to_string(v));
                ++counts[static_cast<std::size_t>(l)];
            }
            for (int k = 1; k <= q; ++k)
                if (counts[static_cast<std::size_t>(k)] == 0)
                    throw ValidationError("template: empty parcel " + std::to_string(k));
        } else {
            if (maps.rows() < 1 || maps.cols() < 2)
                throw ValidationError("template: continuous maps must be Q x V with V >= 2");
            if (!maps.allFinite()) throw ValidationError("template: non-finite map values");
            for (Eigen::Index q = 0; q < maps.rows(); ++q)
                if (maps.row(q).cwiseAbs().maxCoeff() == 0.0)
                    throw ValidationError("template: all-zero map for network " +
                                          std::to_string(q));
        }
        if (!network_names.empty() &&
            network_names.size() != static_cast<std::size_t>(q_count()))
            throw ValidationError("template: network_names count does not match Q");
    }
};

inline NetworkTemplate continuous_template(Matrix maps,
                                           std::vector<std::string> names = {}) {
    NetworkTemplate t;
    t.kind = TemplateKind::ContinuousMaps;
    t.maps = std::move(maps);
    t.network_names = std::move(names);
    return t;
}

// Rigid-body realignment parameters: 3 translations (mm) then 3 rotations
// (radians) per raw volume.
struct MotionParams {
    Matrix params;  // T_original x 6

    void validate() const {
        if (params.cols() != 6)
            throw ValidationError("MotionParams: expected 6 columns, got " +
                                  std::to_string(params.cols()));
        if (!params.allFinite()) throw ValidationError("MotionParams: non-finite entries");
    }
};

}  // namespace bbm
