#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace ifdiff {

using Vec3 = Eigen::Vector3d;

struct Residue {
    Vec3 n_xyz = Vec3::Zero();
    Vec3 ca_xyz = Vec3::Zero();
    Vec3 c_xyz = Vec3::Zero();
    Vec3 o_xyz = Vec3::Zero();
    double b_factor = 0.0;
    std::optional<double> sasa;
    std::optional<int> ss_class;
    int aa_type = 0;

    bool operator==(const Residue&) const = default;
};

struct ProteinBackbone {
    std::string id;
    std::vector<Residue> residues;
    // Index b means residue b starts a new chain segment (no bond between b-1 and b).
    std::vector<int> chain_breaks;

    std::size_t size() const { return residues.size(); }
    std::vector<int> sequence() const;
    bool operator==(const ProteinBackbone&) const = default;
};

// JSON backbone format: {"id", "seq", "residues": [{"N","CA","C","O","bfactor","sasa"?,"ss"?}], "breaks"}.
ProteinBackbone parse_backbone(const std::string& text);
std::string serialize_backbone(const ProteinBackbone& backbone);
ProteinBackbone load_backbone(const std::string& path);

// Per-residue (sin phi, cos phi, sin psi, cos psi). Undefined angles encode as (0, 1).
struct DihedralResult {
    Eigen::MatrixXd values;  // N x 4
    std::vector<bool> phi_defined;
    std::vector<bool> psi_defined;
    bool degenerate_warning = false;
};

DihedralResult dihedrals(const ProteinBackbone& backbone);

// Signed torsion angle in radians for p0-p1-p2-p3; nullopt when three consecutive points are
// collinear within tolerance.
std::optional<double> torsion(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3);

inline constexpr double kProbeRadius = 1.4;
inline constexpr double kRadiusN = 1.55;
inline constexpr double kRadiusC = 1.70;
inline constexpr double kRadiusO = 1.52;

// Shrake-Rupley over the four backbone atoms of every residue. Sphere points are oriented in
// each residue's own N-CA-C frame so the estimate is invariant to rigid motion.
Eigen::VectorXd sasa(const ProteinBackbone& backbone, int n_sphere_points = 960,
                     double probe_radius = kProbeRadius);

// Golden-spiral points on the unit sphere.
std::vector<Vec3> sphere_points(int n);

enum SsClass : int { kHelix = 0, kStrand = 1, kCoil = 2 };

int classify_ramachandran(std::optional<double> phi_deg, std::optional<double> psi_deg);
std::vector<int> secondary_structure(const ProteinBackbone& backbone);

}  // namespace ifdiff
