#pragma once

// Scene files (schema "phc-scene/1"): parsing, validation with JSON-pointer
// diagnostics, default filling and the canonical echo.

#include "core.hpp"
#include "media.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace phc {

using json = nlohmann::json;

inline constexpr const char* scene_schema = "phc-scene/1";

[[noreturn]] inline void schema_fail(const std::string& pointer, const std::string& msg) {
  fail(error_kind::schema_error, (pointer.empty() ? std::string("/") : pointer) + ": " + msg);
}

namespace detail {

inline std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}

// Reads one JSON object, records every key it consumes into `dst` (defaults
// included) and rejects keys it never consumed.
class ObjectReader {
 public:
  ObjectReader(const json& src, std::string pointer) : src_(src), ptr_(std::move(pointer)) {
    if (!src_.is_object()) schema_fail(ptr_, "expected an object");
  }

  std::string at(const std::string& key) const { return ptr_ + "/" + escape_pointer(key); }
  bool has(const std::string& key) const { return src_.contains(key) && !src_.at(key).is_null(); }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return src_.at(key);
  }
  void mark(const std::string& key) { seen_.insert(key); }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    seen_.insert(key);
    if (!has(key)) {
      if (!def) schema_fail(at(key), "required number is missing");
      out_[key] = *def;
      return *def;
    }
    const json& v = src_.at(key);
    if (!v.is_number()) schema_fail(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) schema_fail(at(key), "number must be finite");
    out_[key] = d;
    return d;
  }

  double positive(const std::string& key, std::optional<double> def = std::nullopt) {
    const double d = number(key, def);
    if (!(d > 0.0)) schema_fail(at(key), "must be positive");
    return d;
  }

  long integer(const std::string& key, std::optional<long> def = std::nullopt, long lo = std::numeric_limits<long>::min()) {
    seen_.insert(key);
    if (!has(key)) {
      if (!def) schema_fail(at(key), "required integer is missing");
      out_[key] = *def;
      return *def;
    }
    const json& v = src_.at(key);
    if (!v.is_number_integer()) schema_fail(at(key), "expected an integer");
    const long i = v.get<long>();
    if (i < lo) schema_fail(at(key), "must be at least " + std::to_string(lo));
    out_[key] = i;
    return i;
  }

  std::string text(const std::string& key, std::string def, std::initializer_list<const char*> allowed) {
    seen_.insert(key);
    std::string s = def;
    if (has(key)) {
      const json& v = src_.at(key);
      if (!v.is_string()) schema_fail(at(key), "expected a string");
      s = v.get<std::string>();
    }
    bool ok = allowed.size() == 0;
    for (const char* a : allowed) ok = ok || s == a;
    if (!ok) {
      std::string list;
      for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
      schema_fail(at(key), "must be one of: " + list);
    }
    out_[key] = s;
    return s;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt) {
    seen_.insert(key);
    if (!has(key)) {
      if (!def) schema_fail(at(key), "required array is missing");
      out_[key] = *def;
      return *def;
    }
    const json& v = src_.at(key);
    if (!v.is_array()) schema_fail(at(key), "expected an array of numbers");
    std::vector<double> r;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) schema_fail(at(key) + "/" + std::to_string(i), "expected a number");
      r.push_back(v[i].get<double>());
    }
    out_[key] = r;
    return r;
  }

  std::optional<Interval> interval(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) {
      out_[key] = nullptr;
      return std::nullopt;
    }
    const json& v = src_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      schema_fail(at(key), "expected [a, b]");
    const Interval iv{v[0].get<double>(), v[1].get<double>()};
    if (!(iv.hi > iv.lo)) schema_fail(at(key), "interval must satisfy a < b");
    out_[key] = json::array({iv.lo, iv.hi});
    return iv;
  }

  void put(const std::string& key, json value) { out_[key] = std::move(value); }
  const json& source() const { return src_; }

  json finish() {
    for (auto it = src_.begin(); it != src_.end(); ++it)
      if (!seen_.count(it.key())) schema_fail(at(it.key()), "unknown key");
    return out_;
  }

 private:
  const json& src_;
  std::string ptr_;
  std::set<std::string> seen_;
  json out_ = json::object();
};

}  // namespace detail

/// Parsed medium: its profile, the Fourier order of w and the canonical JSON.
struct MediumConfig {
  std::shared_ptr<const ConstitutiveProfile> profile;
  int fourier_order = 64;
  json canonical;

  Medium medium() const { return Medium(*profile, fourier_order); }
};

struct PacketConfig {
  std::string side = "left";
  int band = 1;
  std::optional<double> k0;       // default 0.5 pi / p of the packet medium
  std::optional<double> sigma_k;  // default 0.05 pi / p
  double x0 = 0.0;
  int velocity_sign = 0;
};

struct RunConfig {
  double dt = 0.0;  // 0: 0.05 / max|lambda| on the grid (evolve); 0.05 for moller and scatter
  double t_end = 20.0;
  long snapshot_every = 0;
  double tolerance = 1e-14;
  double boundary_alarm = 1e-4;
  std::string direction = "plus";
  double schedule_t0 = 0.0;  // 0: 2 max(1, X) / |v|
  int schedule_points = 5;
  double isometric_defect = 0.02;
  double null_norm = 0.05;
  double max_time = 0.0;
  double check_interval = 2.0;
  double window_periods = 10.0;
  double separation = 1e-4;
  double nonseparation = 0.1;
};

struct SceneConfig {
  MediumConfig left;
  MediumConfig right;
  Transition transition = Transition::compact(1.0);
  int N = 64;
  int kpoints = 201;
  int n_bands = 6;
  std::string side = "left";
  std::optional<Interval> window;
  std::optional<double> lambda;
  int grid_cells = 128;
  int points_per_cell = 8;
  PacketConfig packet;
  RunConfig run;
  std::vector<double> rho;
  int threads = 0;
  long seed = 1;
  json effective;

  const MediumConfig& medium(const std::string& s) const { return s == "right" ? right : left; }
};

namespace detail {

inline cplx read_complex(const json& v, const std::string& ptr) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) return {v[0].get<double>(), v[1].get<double>()};
  schema_fail(ptr, "expected a number or [re, im]");
}

inline void check_pd(double eps, double mu, cplx chi, const std::string& ptr) {
  if (!(eps > 0.0)) schema_fail(ptr, "eps must be positive");
  if (!(mu > 0.0)) schema_fail(ptr, "mu must be positive");
  if (!(eps * mu - std::norm(chi) > 0.0)) schema_fail(ptr, "eps*mu - |chi|^2 must be positive");
}

inline MediumConfig parse_medium(const json& src, const std::string& ptr) {
  ObjectReader r(src, ptr);
  MediumConfig mc;
  mc.fourier_order = static_cast<int>(r.integer("fourier_order", 64, 1));
  const int reps = int(r.has("layers")) + int(r.has("fourier")) + int(r.has("samples"));
  if (reps > 1) schema_fail(ptr, "give at most one of layers, fourier, samples");
  try {
    if (r.has("layers")) {
      const json& arr = r.raw("layers");
      if (!arr.is_array() || arr.empty()) schema_fail(r.at("layers"), "expected a non-empty array of layers");
      std::vector<Layer> layers;
      json out = json::array();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string lp = r.at("layers") + "/" + std::to_string(i);
        ObjectReader lr(arr[i], lp);
        Layer l;
        l.d = lr.positive("d");
        l.eps = lr.number("eps", 1.0);
        l.mu = lr.number("mu", 1.0);
        l.chi = {lr.number("chi_re", 0.0), lr.number("chi_im", 0.0)};
        check_pd(l.eps, l.mu, l.chi, lp);
        layers.push_back(l);
        out.push_back(lr.finish());
      }
      r.put("layers", out);
      double total = 0.0;
      for (const auto& l : layers) total += l.d;
      if (r.has("period")) {
        const double p = r.positive("period");
        if (std::abs(p - total) > 1e-12 * total) schema_fail(r.at("period"), "period differs from the sum of layer thicknesses");
      } else {
        r.put("period", total);
        r.mark("period");
      }
      mc.profile = std::make_shared<const ConstitutiveProfile>(ConstitutiveProfile::layered(std::move(layers)));
    } else if (r.has("fourier")) {
      const double p = r.positive("period", 1.0);
      ObjectReader fr(r.raw("fourier"), r.at("fourier"));
      auto list = [&](const char* key) {
        std::vector<cplx> v;
        fr.mark(key);
        if (!fr.has(key)) {
          fr.put(key, json::array());
          return v;
        }
        const json& a = fr.raw(key);
        if (!a.is_array()) schema_fail(fr.at(key), "expected an array of coefficients");
        json out = json::array();
        for (std::size_t i = 0; i < a.size(); ++i) {
          v.push_back(read_complex(a[i], fr.at(key) + "/" + std::to_string(i)));
          out.push_back(json::array({v.back().real(), v.back().imag()}));
        }
        fr.put(key, out);
        return v;
      };
      auto eps = list("eps");
      auto mu = list("mu");
      auto chi = list("chi");
      r.put("fourier", fr.finish());
      try {
        mc.profile = std::make_shared<const ConstitutiveProfile>(ConstitutiveProfile::fourier(p, eps, mu, chi));
      } catch (const error& e) {
        schema_fail(r.at("fourier"), e.what());
      }
    } else if (r.has("samples")) {
      const double p = r.positive("period", 1.0);
      ObjectReader sr(r.raw("samples"), r.at("samples"));
      auto eps = sr.numbers("eps");
      auto mu = sr.numbers("mu");
      auto cre = sr.numbers("chi_re", std::vector<double>(eps.size(), 0.0));
      auto cim = sr.numbers("chi_im", std::vector<double>(eps.size(), 0.0));
      r.put("samples", sr.finish());
      if (eps.empty() || mu.size() != eps.size() || cre.size() != eps.size() || cim.size() != eps.size())
        schema_fail(r.at("samples"), "sample arrays must be non-empty and of equal length");
      std::vector<cplx> chi;
      for (std::size_t i = 0; i < eps.size(); ++i) {
        chi.emplace_back(cre[i], cim[i]);
        check_pd(eps[i], mu[i], chi.back(), r.at("samples") + "/eps/" + std::to_string(i));
      }
      mc.profile = std::make_shared<const ConstitutiveProfile>(ConstitutiveProfile::sampled(p, eps, mu, chi));
    } else {
      // homogeneous medium
      const double p = r.positive("period", 1.0);
      const double eps = r.number("eps", 1.0), mu = r.number("mu", 1.0);
      const cplx chi{r.number("chi_re", 0.0), r.number("chi_im", 0.0)};
      check_pd(eps, mu, chi, ptr);
      mc.profile = std::make_shared<const ConstitutiveProfile>(ConstitutiveProfile::homogeneous(eps, mu, chi, p));
    }
  } catch (const error& e) {
    if (e.kind() == error_kind::schema_error) throw;
    schema_fail(ptr, e.what());
  }
  mc.canonical = r.finish();
  return mc;
}

}  // namespace detail

inline SceneConfig parse_scene_json(const json& doc) {
  detail::ObjectReader r(doc, "");
  SceneConfig sc;
  const std::string tag = r.text("schema", scene_schema, {});
  if (tag != scene_schema) schema_fail(r.at("schema"), std::string("unsupported schema tag, expected ") + scene_schema);

  {
    if (!r.has("media")) schema_fail(r.at("media"), "required object is missing");
    detail::ObjectReader mr(r.raw("media"), r.at("media"));
    if (!mr.has("left")) schema_fail(mr.at("left"), "required medium is missing");
    sc.left = detail::parse_medium(mr.raw("left"), mr.at("left"));
    if (mr.has("right"))
      sc.right = detail::parse_medium(mr.raw("right"), mr.at("right"));
    else {
      sc.right = sc.left;
      mr.mark("right");
    }
    mr.put("left", sc.left.canonical);
    mr.put("right", sc.right.canonical);
    r.put("media", mr.finish());
  }
  {
    static const json empty = json::object();
    detail::ObjectReader jr(r.has("junction") ? r.raw("junction") : empty, r.at("junction"));
    r.mark("junction");
    const std::string mode = jr.text("mode", "compact", {"compact", "algebraic"});
    if (mode == "compact") {
      const double X = jr.number("halfwidth", 1.0);
      if (!(X >= 0.0)) schema_fail(jr.at("halfwidth"), "must be non-negative");
      sc.transition = Transition::compact(X);
    } else {
      sc.transition = Transition::algebraic(jr.positive("epsilon", 1.0));
    }
    r.put("junction", jr.finish());
  }
  {
    static const json empty = json::object();
    detail::ObjectReader br(r.has("bands") ? r.raw("bands") : empty, r.at("bands"));
    r.mark("bands");
    sc.N = static_cast<int>(br.integer("N", 64, 1));
    sc.kpoints = static_cast<int>(br.integer("kpoints", 201, 2));
    sc.n_bands = static_cast<int>(br.integer("n_bands", 6, 1));
    sc.side = br.text("side", "left", {"left", "right"});
    r.put("bands", br.finish());
  }
  sc.window = r.interval("window");
  if (r.has("lambda"))
    sc.lambda = r.number("lambda");
  else {
    r.mark("lambda");
    r.put("lambda", nullptr);
  }
  {
    static const json empty = json::object();
    detail::ObjectReader gr(r.has("grid") ? r.raw("grid") : empty, r.at("grid"));
    r.mark("grid");
    sc.grid_cells = static_cast<int>(gr.integer("cells", 128, 1));
    sc.points_per_cell = static_cast<int>(gr.integer("points_per_cell", 8, 1));
    const long n = long(sc.grid_cells) * sc.points_per_cell;
    if ((n & (n - 1)) != 0) schema_fail(gr.at("cells"), "cells * points_per_cell must be a power of two");
    r.put("grid", gr.finish());
  }
  {
    static const json empty = json::object();
    detail::ObjectReader pr(r.has("packet") ? r.raw("packet") : empty, r.at("packet"));
    r.mark("packet");
    auto& p = sc.packet;
    p.side = pr.text("side", "left", {"left", "right"});
    p.band = static_cast<int>(pr.integer("band", 1));
    if (p.band == 0) schema_fail(pr.at("band"), "band numbers are ..., -2, -1, 1, 2, ...");
    const double period = sc.medium(p.side).profile->period();
    p.k0 = pr.number("k0", 0.5 * pi / period);
    p.sigma_k = pr.positive("sigma_k", 0.05 * pi / period);
    p.x0 = pr.number("x0", 0.0);
    p.velocity_sign = static_cast<int>(pr.integer("velocity_sign", 0));
    if (p.velocity_sign < -1 || p.velocity_sign > 1) schema_fail(pr.at("velocity_sign"), "must be -1, 0 or 1");
    r.put("packet", pr.finish());
  }
  {
    static const json empty = json::object();
    detail::ObjectReader rr(r.has("run") ? r.raw("run") : empty, r.at("run"));
    r.mark("run");
    auto& run = sc.run;
    run.dt = rr.number("dt", 0.0);
    if (run.dt < 0.0) schema_fail(rr.at("dt"), "must be non-negative (0 selects the default rule)");
    run.t_end = rr.number("t_end", 20.0);
    run.snapshot_every = rr.integer("snapshot_every", 0, 0);
    run.tolerance = rr.positive("tolerance", 1e-14);
    run.boundary_alarm = rr.number("boundary_alarm", 1e-4);
    run.direction = rr.text("direction", "plus", {"plus", "minus"});
    run.schedule_t0 = rr.number("schedule_t0", 0.0);
    run.schedule_points = static_cast<int>(rr.integer("schedule_points", 5, 1));
    run.isometric_defect = rr.positive("isometric_defect", 0.02);
    run.null_norm = rr.positive("null_norm", 0.05);
    run.max_time = rr.number("max_time", 0.0);
    run.check_interval = rr.positive("check_interval", 2.0);
    run.window_periods = rr.positive("window_periods", 10.0);
    run.separation = rr.positive("separation", 1e-4);
    run.nonseparation = rr.positive("nonseparation", 0.1);
    r.put("run", rr.finish());
  }
  sc.rho = r.numbers("rho", std::vector<double>{10.0, std::pow(10.0, 1.5), 100.0, std::pow(10.0, 2.5), 1000.0});
  for (std::size_t i = 0; i < sc.rho.size(); ++i) {
    if (!(sc.rho[i] > 0.0)) schema_fail(r.at("rho") + "/" + std::to_string(i), "must be positive");
    if (i > 0 && !(sc.rho[i] > sc.rho[i - 1])) schema_fail(r.at("rho") + "/" + std::to_string(i), "must increase");
  }
  sc.threads = static_cast<int>(r.integer("threads", 0, 0));
  sc.seed = r.integer("seed", 1);
  sc.effective = r.finish();
  return sc;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(error_kind::schema_error, "cannot read scene file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(error_kind::schema_error, "/: invalid JSON: " + std::string(e.what()));
  }
}

inline SceneConfig parse_scene(const std::string& path) { return parse_scene_json(read_json_file(path)); }

/// Canonical serialization: sorted keys, two-space indent, trailing newline.
inline std::string scene_echo(const SceneConfig& sc) { return sc.effective.dump(2) + "\n"; }

}  // namespace phc
