#include "ifdiff/backbone.h"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "ifdiff/amino.h"
#include "ifdiff/errors.h"

namespace ifdiff {

using nlohmann::json;

namespace {

ParseError residue_error(std::size_t index, const std::string& what) {
    return ParseError("residue " + std::to_string(index) + ": " + what);
}

Vec3 read_atom(const json& rec, const char* atom, std::size_t index) {
    auto it = rec.find(atom);
    if (it == rec.end()) throw residue_error(index, std::string("missing atom \"") + atom + "\"");
    if (!it->is_array() || it->size() != 3) {
        throw residue_error(index, std::string("atom \"") + atom + "\" must have exactly 3 coordinates");
    }
    Vec3 v;
    for (int k = 0; k < 3; ++k) {
        const auto& c = (*it)[static_cast<std::size_t>(k)];
        if (!c.is_number()) throw residue_error(index, std::string("atom \"") + atom + "\" has a non-numeric coordinate");
        v[k] = c.get<double>();
        if (!std::isfinite(v[k])) throw residue_error(index, std::string("atom \"") + atom + "\" has a non-finite coordinate");
    }
    return v;
}

json write_vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::vector<int> ProteinBackbone::sequence() const {
    std::vector<int> out;
    out.reserve(residues.size());
    for (const auto& r : residues) out.push_back(r.aa_type);
    return out;
}

ProteinBackbone parse_backbone(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("backbone document must be a JSON object");

    ProteinBackbone out;
    if (!doc.contains("id") || !doc["id"].is_string()) throw ParseError("missing string field \"id\"");
    out.id = doc["id"].get<std::string>();
    if (!doc.contains("seq") || !doc["seq"].is_string()) throw ParseError("missing string field \"seq\"");
    const auto seq = doc["seq"].get<std::string>();
    if (!doc.contains("residues") || !doc["residues"].is_array()) throw ParseError("missing array field \"residues\"");
    const auto& recs = doc["residues"];
    if (recs.empty()) throw ParseError("backbone has no residues");
    if (recs.size() != seq.size()) {
        throw ParseError("atom count mismatch: " + std::to_string(recs.size()) + " residue records for sequence of length " +
                         std::to_string(seq.size()));
    }

    out.residues.reserve(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& rec = recs[i];
        if (!rec.is_object()) throw residue_error(i, "malformed record");
        Residue r;
        auto type = type_index(seq[i]);
        if (!type) throw residue_error(i, std::string("unknown amino-acid letter '") + seq[i] + "'");
        r.aa_type = *type;
        r.n_xyz = read_atom(rec, "N", i);
        r.ca_xyz = read_atom(rec, "CA", i);
        r.c_xyz = read_atom(rec, "C", i);
        r.o_xyz = read_atom(rec, "O", i);
        if (rec.contains("bfactor")) {
            if (!rec["bfactor"].is_number()) throw residue_error(i, "bfactor must be a number");
            r.b_factor = rec["bfactor"].get<double>();
            if (!std::isfinite(r.b_factor) || r.b_factor < 0) throw residue_error(i, "bfactor must be finite and >= 0");
        }
        if (rec.contains("sasa") && !rec["sasa"].is_null()) {
            if (!rec["sasa"].is_number()) throw residue_error(i, "sasa must be a number");
            double s = rec["sasa"].get<double>();
            if (!std::isfinite(s) || s < 0) throw residue_error(i, "sasa must be finite and >= 0");
            r.sasa = s;
        }
        if (rec.contains("ss") && !rec["ss"].is_null()) {
            if (!rec["ss"].is_number_integer()) throw residue_error(i, "ss must be an integer");
            int ss = rec["ss"].get<int>();
            if (ss < 0 || ss >= kNumSsClasses) throw residue_error(i, "ss class out of range [0,8)");
            r.ss_class = ss;
        }
        out.residues.push_back(std::move(r));
    }

    if (doc.contains("breaks")) {
        if (!doc["breaks"].is_array()) throw ParseError("\"breaks\" must be an array");
        for (const auto& b : doc["breaks"]) {
            if (!b.is_number_integer()) throw ParseError("chain break indices must be integers");
            int idx = b.get<int>();
            if (idx < 0 || idx >= static_cast<int>(out.residues.size())) {
                throw ParseError("chain break index out of range: " + std::to_string(idx));
            }
            out.chain_breaks.push_back(idx);
        }
    }
    return out;
}

std::string serialize_backbone(const ProteinBackbone& backbone) {
    json doc;
    doc["id"] = backbone.id;
    std::string seq;
    json recs = json::array();
    for (const auto& r : backbone.residues) {
        seq.push_back(type_letter(r.aa_type));
        json rec;
        rec["N"] = write_vec(r.n_xyz);
        rec["CA"] = write_vec(r.ca_xyz);
        rec["C"] = write_vec(r.c_xyz);
        rec["O"] = write_vec(r.o_xyz);
        rec["bfactor"] = r.b_factor;
        if (r.sasa) rec["sasa"] = *r.sasa;
        if (r.ss_class) rec["ss"] = *r.ss_class;
        recs.push_back(std::move(rec));
    }
    doc["seq"] = seq;
    doc["residues"] = std::move(recs);
    doc["breaks"] = backbone.chain_breaks;
    return doc.dump();
}

ProteinBackbone load_backbone(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open backbone file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_backbone(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::optional<double> torsion(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
    const Vec3 b1 = p1 - p0;
    const Vec3 b2 = p2 - p1;
    const Vec3 b3 = p3 - p2;
    const Vec3 n1 = b1.cross(b2);
    const Vec3 n2 = b2.cross(b3);
    constexpr double tol = 1e-8;
    if (n1.norm() <= tol * b1.norm() * b2.norm() || n2.norm() <= tol * b2.norm() * b3.norm()) {
        return std::nullopt;
    }
    return std::atan2(b2.norm() * b1.dot(n2), n1.dot(n2));
}

DihedralResult dihedrals(const ProteinBackbone& backbone) {
    const auto n = backbone.residues.size();
    if (n < 2) throw GeometryError("dihedrals require at least 2 residues");
    std::vector<bool> starts_segment(n, false);
    starts_segment[0] = true;
    for (int b : backbone.chain_breaks) starts_segment[static_cast<std::size_t>(b)] = true;

    DihedralResult out;
    out.values.resize(static_cast<Eigen::Index>(n), 4);
    out.phi_defined.assign(n, false);
    out.psi_defined.assign(n, false);
    const auto& res = backbone.residues;
    for (std::size_t i = 0; i < n; ++i) {
        std::optional<double> phi;
        std::optional<double> psi;
        if (!starts_segment[i]) {
            phi = torsion(res[i - 1].c_xyz, res[i].n_xyz, res[i].ca_xyz, res[i].c_xyz);
            if (!phi) out.degenerate_warning = true;
        }
        if (i + 1 < n && !starts_segment[i + 1]) {
            psi = torsion(res[i].n_xyz, res[i].ca_xyz, res[i].c_xyz, res[i + 1].n_xyz);
            if (!psi) out.degenerate_warning = true;
        }
        const auto row = static_cast<Eigen::Index>(i);
        out.phi_defined[i] = phi.has_value();
        out.psi_defined[i] = psi.has_value();
        const double a = phi.value_or(0.0);
        const double b = psi.value_or(0.0);
        out.values(row, 0) = std::sin(a);
        out.values(row, 1) = std::cos(a);
        out.values(row, 2) = std::sin(b);
        out.values(row, 3) = std::cos(b);
    }
    return out;
}

std::vector<Vec3> sphere_points(int n) {
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(n));
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n; ++k) {
        const double z = 1.0 - (2.0 * k + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double theta = golden * k;
        pts.emplace_back(r * std::cos(theta), r * std::sin(theta), z);
    }
    return pts;
}

namespace {

Eigen::Matrix3d residue_frame(const Residue& r) {
    const Vec3 u = r.c_xyz - r.ca_xyz;
    const Vec3 v = r.n_xyz - r.ca_xyz;
    const double un = u.norm();
    if (un < 1e-12) return Eigen::Matrix3d::Identity();
    const Vec3 e1 = u / un;
    Vec3 w = v - v.dot(e1) * e1;
    if (w.norm() < 1e-8 * std::max(1.0, v.norm())) return Eigen::Matrix3d::Identity();
    const Vec3 e2 = w.normalized();
    Eigen::Matrix3d frame;
    frame.col(0) = e1;
    frame.col(1) = e2;
    frame.col(2) = e1.cross(e2);
    return frame;
}

}  // namespace

Eigen::VectorXd sasa(const ProteinBackbone& backbone, int n_sphere_points, double probe_radius) {
    if (n_sphere_points < 16) throw GeometryError("sasa needs at least 16 sphere points");
    if (!(probe_radius > 0)) throw GeometryError("probe radius must be positive");

    struct Atom {
        Vec3 center;
        double radius;
        std::size_t residue;
    };
    std::vector<Atom> atoms;
    atoms.reserve(backbone.size() * 4);
    for (std::size_t i = 0; i < backbone.size(); ++i) {
        const auto& r = backbone.residues[i];
        atoms.push_back({r.n_xyz, kRadiusN + probe_radius, i});
        atoms.push_back({r.ca_xyz, kRadiusC + probe_radius, i});
        atoms.push_back({r.c_xyz, kRadiusC + probe_radius, i});
        atoms.push_back({r.o_xyz, kRadiusO + probe_radius, i});
    }

    const auto unit = sphere_points(n_sphere_points);
    std::vector<Eigen::Matrix3d> frames;
    frames.reserve(backbone.size());
    for (const auto& r : backbone.residues) frames.push_back(residue_frame(r));

    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(backbone.size()));
    std::vector<std::size_t> neighbors;
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        const auto& atom = atoms[a];
        neighbors.clear();
        for (std::size_t b = 0; b < atoms.size(); ++b) {
            if (b == a) continue;
            const double reach = atom.radius + atoms[b].radius;
            if ((atoms[b].center - atom.center).squaredNorm() < reach * reach) neighbors.push_back(b);
        }
        const auto& frame = frames[atom.residue];
        int exposed = 0;
        for (const auto& u : unit) {
            const Vec3 p = atom.center + atom.radius * (frame * u);
            bool buried = false;
            for (auto b : neighbors) {
                const double rb = atoms[b].radius;
                if ((p - atoms[b].center).squaredNorm() < rb * rb) {
                    buried = true;
                    break;
                }
            }
            if (!buried) ++exposed;
        }
        const double area = 4.0 * std::numbers::pi * atom.radius * atom.radius;
        out[static_cast<Eigen::Index>(atom.residue)] += area * exposed / n_sphere_points;
    }
    return out;
}

int classify_ramachandran(std::optional<double> phi_deg, std::optional<double> psi_deg) {
    if (!phi_deg || !psi_deg) return kCoil;
    const double phi = *phi_deg;
    const double psi = *psi_deg;
    if (phi > -100.0 && phi < -30.0 && psi > -80.0 && psi < -5.0) return kHelix;
    if (phi > -180.0 && phi < -80.0 && psi > 80.0 && psi < 180.0) return kStrand;
    return kCoil;
}

std::vector<int> secondary_structure(const ProteinBackbone& backbone) {
    const auto n = backbone.size();
    std::vector<int> out(n, kCoil);
    bool all_given = std::all_of(backbone.residues.begin(), backbone.residues.end(),
                                 [](const Residue& r) { return r.ss_class.has_value(); });
    if (all_given) {
        for (std::size_t i = 0; i < n; ++i) out[i] = *backbone.residues[i].ss_class;
        return out;
    }
    if (n < 2) {
        if (n == 1 && backbone.residues[0].ss_class) out[0] = *backbone.residues[0].ss_class;
        return out;
    }
    const auto dih = dihedrals(backbone);
    constexpr double to_deg = 180.0 / std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
        if (backbone.residues[i].ss_class) {
            out[i] = *backbone.residues[i].ss_class;
            continue;
        }
        const auto row = static_cast<Eigen::Index>(i);
        std::optional<double> phi, psi;
        if (dih.phi_defined[i]) phi = std::atan2(dih.values(row, 0), dih.values(row, 1)) * to_deg;
        if (dih.psi_defined[i]) psi = std::atan2(dih.values(row, 2), dih.values(row, 3)) * to_deg;
        out[i] = classify_ramachandran(phi, psi);
    }
    return out;
}

}  // namespace ifdiff
