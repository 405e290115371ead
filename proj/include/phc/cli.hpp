#pragma once

// Subcommand front end. Every command reads a scene, applies flag overrides,
// writes its artifacts plus effective_config.json into --out and returns the
// process exit code.

#include "oracle.hpp"
#include "scattering.hpp"
#include "scene.hpp"
#include "spectral.hpp"

#include <boost/program_options.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace phc::cli {

namespace po = boost::program_options;
namespace fs = std::filesystem;

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"bands",   "thresholds",   "spectrum",     "mourre",
                                          "flatband", "interface-states", "evolve",  "moller",
                                          "initial-sets", "scatter", "oracle-dispersion", "oracle-scatter",
                                          "validate"};
  return c;
}

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string g15(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

inline json interval_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }
inline json intervals_json(const std::vector<Interval>& v) {
  json a = json::array();
  for (const auto& iv : v) a.push_back(interval_json(iv));
  return a;
}
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class Context {
 public:
  Context(SceneConfig sc, fs::path out, std::ostream& log) : sc_(std::move(sc)), out_(std::move(out)), log_(log) {
    fs::create_directories(out_);
    write_text("effective_config.json", scene_echo(sc_));
  }

  const SceneConfig& scene() const { return sc_; }
  std::ostream& log() { return log_; }

  void write_text(const std::string& name, const std::string& text) const {
    std::ofstream f(out_ / name, std::ios::binary);
    if (!f) fail(error_kind::invalid_argument, "cannot write " + (out_ / name).string());
    f << text;
  }
  void write_json(const std::string& name, const json& j) const { write_text(name, j.dump(2) + "\n"); }

  Medium medium(const std::string& side) const { return sc_.medium(side).medium(); }
  Interval window() const {
    if (!sc_.window) fail(error_kind::invalid_argument, "this command needs a window (scene key 'window' or --window)");
    return *sc_.window;
  }
  std::shared_ptr<const JunctionSystem> system() const {
    return std::make_shared<const JunctionSystem>(sc_.left.medium(), sc_.right.medium(), sc_.transition);
  }
  Grid grid() const { return Grid::periodic(sc_.left.profile->period(), sc_.grid_cells, sc_.points_per_cell); }
  BandOptions band_options() const {
    BandOptions o;
    o.threads = sc_.threads;
    return o;
  }

  /// Band structure with enough bands to cover `win`.
  BandStructure covering_bands(const Medium& m, Interval win) const {
    const auto kg = default_kgrid(m.period(), sc_.kpoints);
    const int max_bands = 2 * (2 * sc_.N + 1);
    int nb = std::max(2, sc_.n_bands);
    for (;;) {
      auto bs = solve_bands(m, kg, sc_.N, nb, band_options());
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int b = 0; b < bs.n_bands(); ++b) {
        lo = std::min(lo, bs.min_value(b));
        hi = std::max(hi, bs.max_value(b));
      }
      if ((lo <= win.lo && hi >= win.hi) || nb >= max_bands - 2) return bs;
      nb = std::min(max_bands - 2, nb + 4);
    }
  }

 private:
  SceneConfig sc_;
  fs::path out_;
  std::ostream& log_;
};

inline int sign_of(const std::string& s) { return s == "minus" ? -1 : 1; }
inline Side side_of(const std::string& s) { return s == "right" ? Side::right : Side::left; }

inline MollerOptions moller_options(const SceneConfig& sc) {
  MollerOptions o;
  o.t0 = sc.run.schedule_t0;
  o.points = sc.run.schedule_points;
  o.dt = sc.run.dt > 0.0 ? sc.run.dt : 0.05;
  o.isometric_defect = sc.run.isometric_defect;
  o.null_norm = sc.run.null_norm;
  o.boundary_alarm = sc.run.boundary_alarm;
  return o;
}

inline json moller_json(const MollerReport& r) {
  return json{{"direction", r.direction > 0 ? "plus" : "minus"},
              {"schedule", r.schedule},
              {"norms", r.norms},
              {"increments", r.increments},
              {"initial_norm", r.initial_norm},
              {"final_norm", r.final_norm},
              {"defect", r.defect},
              {"energy_in", r.energy_in},
              {"energy_out", r.energy_out},
              {"increments_decrease", r.increments_decrease},
              {"verdict", to_string(r.verdict)}};
}

// ---------------------------------------------------------------------------
// commands

inline void cmd_bands(Context& c) {
  const auto& sc = c.scene();
  const Medium m = c.medium(sc.side);
  const auto bs = solve_bands(m, default_kgrid(m.period(), sc.kpoints), sc.N, sc.n_bands, c.band_options());
  std::string csv = "k,band,lambda,dlambda_dk,overlap\n";
  for (std::size_t i = 0; i < bs.kgrid.size(); ++i)
    for (int b = 0; b < bs.n_bands(); ++b)
      csv += g15(bs.kgrid[i]) + "," + std::to_string(b + 1) + "," + g15(bs.bands[b][i]) + "," + g15(bs.velocities[b][i]) +
             "," + g15(bs.overlaps[b][i]) + "\n";
  c.write_text("bands.csv", csv);
  c.log() << "bands: " << bs.n_bands() << " bands x " << bs.kgrid.size() << " k-points, " << bs.flagged.size()
          << " flagged crossings\n";
}

inline json thresholds_json(const ThresholdSet& ts) {
  json a = json::array();
  for (const auto& t : ts.entries)
    a.push_back({{"lambda", t.lambda}, {"band", t.band + 1}, {"k", t.k}, {"curvature", t.curvature}});
  return a;
}

inline void cmd_thresholds(Context& c) {
  const auto& sc = c.scene();
  const Medium m = c.medium(sc.side);
  const auto bs = solve_bands(m, default_kgrid(m.period(), sc.kpoints), sc.N, sc.n_bands, c.band_options());
  const auto ts = find_thresholds(bs);
  c.write_json("thresholds.json", json{{"side", sc.side}, {"thresholds", thresholds_json(ts)}});
  c.log() << "thresholds: " << ts.size() << " found\n";
}

inline void cmd_spectrum(Context& c) {
  const Interval win = c.window();
  auto one = [&](const std::string& side) {
    const auto bs = c.covering_bands(c.medium(side), win);
    const auto th = find_thresholds(bs);
    return spectrum_of_medium(bs, win, &th);
  };
  const auto rep = essential_spectrum_union(one("left"), one("right"));
  auto med = [](const MediumSpectrum& s) { return json{{"bands", intervals_json(s.bands)}, {"gaps", intervals_json(s.gaps)}}; };
  c.write_json("spectrum.json", json{{"window", interval_json(win)},
                                     {"left", med(rep.left)},
                                     {"right", med(rep.right)},
                                     {"bands", intervals_json(rep.essential)},
                                     {"gaps", intervals_json(rep.gaps)},
                                     {"common_gaps", intervals_json(rep.common_gaps)}});
  c.log() << "spectrum: " << rep.essential.size() << " band intervals, " << rep.common_gaps.size() << " common gaps\n";
}

inline void cmd_mourre(Context& c) {
  const auto& sc = c.scene();
  const Interval win = c.window();
  const auto bs = c.covering_bands(c.medium(sc.side), win);
  const auto th = find_thresholds(bs);
  const auto rep = mourre_constant(bs, win, th);
  std::vector<int> bands;
  for (int b : rep.bands) bands.push_back(b + 1);
  c.write_json("mourre.json", json{{"side", sc.side},
                                   {"window", interval_json(win)},
                                   {"c_I", rep.c_I},
                                   {"band", rep.band + 1},
                                   {"k_min", rep.k_min},
                                   {"bands", bands}});
  c.log() << "mourre: c_I = " << g15(rep.c_I) << "\n";
}

inline void cmd_flatband(Context& c) {
  const auto& sc = c.scene();
  const auto cert = flat_band_certificate(c.medium(sc.side), sc.N, sc.rho, sc.threads);
  c.write_json("flatband.json", json{{"side", sc.side},
                                     {"rho", cert.rho},
                                     {"norm", cert.norm},
                                     {"slope", cert.slope},
                                     {"intercept", cert.intercept}});
  c.log() << "flatband: slope " << g15(cert.slope) << "\n";
}

inline void cmd_interface_states(Context& c) {
  const auto& sc = c.scene();
  InterfaceStateOptions opt;
  opt.seed = static_cast<std::uint64_t>(sc.seed);
  const auto rep = interface_states(*c.system(), c.window(), c.grid(), opt);
  json states = json::array();
  for (const auto& s : rep.states)
    states.push_back({{"lambda", s.lambda},
                      {"decay_rate", s.decay_rate},
                      {"center", s.center},
                      {"mass_near", s.mass_near},
                      {"residual", s.residual}});
  c.write_json("interface_states.json",
               json{{"window", interval_json(rep.window)}, {"states", states}, {"seam_states", rep.seam_states}});
  c.log() << "interface-states: " << rep.states.size() << " states\n";
}

inline WavepacketSpec packet_spec(const SceneConfig& sc, double center) {
  WavepacketSpec ws;
  ws.band = sc.packet.band;
  ws.k0 = *sc.packet.k0;
  ws.sigma_k = *sc.packet.sigma_k;
  ws.velocity_sign = sc.packet.velocity_sign;
  ws.window = sc.window;
  ws.center = center;
  return ws;
}

inline void cmd_evolve(Context& c) {
  const auto& sc = c.scene();
  const JunctionScene scene(c.system(), c.grid(), sc.threads);
  const Side side = side_of(sc.packet.side);
  const Wavepacket wp = make_wavepacket(scene.basis(side), packet_spec(sc, sc.packet.x0));
  StateVector psi = apply_junction(scene.cutoffs, scene.single(side, wp.state), scene.full_weight);
  const double n0 = weighted_norm(psi);
  if (!(n0 > 0.0)) fail(error_kind::invalid_argument, "packet is annihilated by the junction map");
  psi *= cplx(1.0 / n0);

  std::string trace = "t,norm,position_mean\n";
  auto snapshot = [&](long index, const StateVector& s) {
    std::string csv = "x,phiE_re,phiE_im,phiH_re,phiH_im\n";
    for (int i = 0; i < s.size(); ++i)
      csv += g15(s.grid().x(i)) + "," + g15(s.e(i).real()) + "," + g15(s.e(i).imag()) + "," + g15(s.h(i).real()) + "," +
             g15(s.h(i).imag()) + "\n";
    char name[64];
    std::snprintf(name, sizeof name, "snapshot_%06ld.csv", index);
    c.write_text(name, csv);
  };
  auto record = [&](double t, const StateVector& s) {
    trace += g15(t) + "," + g15(weighted_norm(s)) + "," + g15(position_mean(s)) + "\n";
  };
  record(0.0, psi);
  if (sc.run.snapshot_every > 0) snapshot(0, psi);
  PropagatorConfig cfg;
  cfg.dt = sc.run.dt;
  cfg.tolerance = sc.run.tolerance;
  cfg.boundary_alarm = sc.run.boundary_alarm;
  long step = 0;
  cfg.observer = [&](double t, const StateVector& s) {
    ++step;
    record(t, s);
    if (sc.run.snapshot_every > 0 && step % sc.run.snapshot_every == 0) snapshot(step, s);
  };
  PropagationStats stats;
  const StateVector end = propagate_full(psi, *scene.full, sc.run.t_end, cfg, &stats);
  c.write_text("trace.csv", trace);
  c.write_json("evolve.json", json{{"t_end", sc.run.t_end},
                                   {"steps", stats.steps},
                                   {"dt", stats.dt},
                                   {"norm_drift", std::abs(weighted_norm(end) - 1.0)},
                                   {"max_boundary_fraction", stats.max_boundary_fraction},
                                   {"energy", mean_energy(*scene.full, end)}});
  c.log() << "evolve: " << stats.steps << " steps, norm drift " << g15(std::abs(weighted_norm(end) - 1.0)) << "\n";
}

inline void cmd_moller(Context& c) {
  const auto& sc = c.scene();
  const JunctionScene scene(c.system(), c.grid(), sc.threads);
  const Side side = side_of(sc.packet.side);
  const Wavepacket wp = make_wavepacket(scene.basis(side), packet_spec(sc, sc.packet.x0));
  const auto res = moller_iterate(scene, scene.single(side, wp.state), sign_of(sc.run.direction), wp.mean_velocity,
                                  moller_options(sc));
  json j = moller_json(res.report);
  j["side"] = sc.packet.side;
  j["packet_velocity"] = wp.mean_velocity;
  j["packet_energy"] = wp.mean_energy;
  c.write_json("moller.json", j);
  c.log() << "moller: " << to_string(res.report.verdict) << ", defect " << g15(res.report.defect) << "\n";
}

inline void cmd_initial_sets(Context& c) {
  const auto& sc = c.scene();
  const JunctionScene scene(c.system(), c.grid(), sc.threads);
  json rows = json::array();
  for (Side side : {Side::left, Side::right})
    for (int v : {-1, 1})
      for (int d : {1, -1}) {
        InitialSetSpec spec;
        spec.side = side;
        spec.velocity_sign = v;
        spec.direction = d;
        spec.band = sc.packet.band;
        // mid-band defaults refer to the medium on this side
        const double p = sc.medium(to_string(side)).profile->period();
        spec.k0 = sc.packet.k0 && sc.packet.side == to_string(side) ? *sc.packet.k0 : 0.5 * pi / p;
        spec.sigma_k = sc.packet.side == to_string(side) ? *sc.packet.sigma_k : 0.05 * pi / p;
        spec.window = sc.window;
        const auto r = initial_set_check(scene, spec, moller_options(sc));
        rows.push_back({{"side", to_string(side)},
                        {"velocity_sign", v > 0 ? "+" : "-"},
                        {"direction", d > 0 ? "+" : "-"},
                        {"verdict", to_string(r.report.verdict)},
                        {"defect", r.report.defect},
                        {"final_norm", r.report.final_norm},
                        {"increments", r.report.increments},
                        {"packet_velocity", r.packet_velocity},
                        {"packet_energy", r.packet_energy}});
        c.log() << "initial-sets: (" << to_string(side) << ", " << (v > 0 ? '+' : '-') << ", " << (d > 0 ? '+' : '-')
                << ") " << to_string(r.report.verdict) << "\n";
      }
  c.write_json("initial_sets.json", rows);
}

inline void cmd_scatter(Context& c) {
  const auto& sc = c.scene();
  const JunctionScene scene(c.system(), c.grid(), sc.threads);
  IncidentSpec inc;
  inc.side = side_of(sc.packet.side);
  inc.band = sc.packet.band;
  inc.k0 = *sc.packet.k0;
  inc.sigma_k = *sc.packet.sigma_k;
  // x0 = 0 places the packet at 40% of the half-domain on the incident side
  inc.x0 = sc.packet.x0 != 0.0 ? sc.packet.x0 : (inc.side == Side::left ? -0.4 : 0.4) * scene.grid.half_length();
  inc.window = sc.window;
  ScatterOptions opt;
  opt.dt = sc.run.dt > 0.0 ? sc.run.dt : 0.05;
  opt.check_interval = sc.run.check_interval;
  opt.max_time = sc.run.max_time;
  opt.window_periods = sc.run.window_periods;
  opt.separation = sc.run.separation;
  opt.nonseparation = sc.run.nonseparation;
  opt.boundary_alarm = sc.run.boundary_alarm;
  const auto rep = time_domain_scatter(scene, inc, opt);
  json per = json::array();
  for (const auto& ch : rep.per_band) per.push_back({{"side", to_string(ch.side)}, {"band", ch.band}, {"mass", ch.mass}});
  c.write_json("scatter.json", json{{"R", rep.R},
                                    {"T", rep.T},
                                    {"residual", rep.residual},
                                    {"near_mass", rep.near_mass},
                                    {"wrong_direction", rep.wrong_direction},
                                    {"flux_defect", rep.flux_defect},
                                    {"time", rep.time},
                                    {"incident_side", to_string(inc.side)},
                                    {"incident_energy", rep.incident_energy},
                                    {"incident_velocity", rep.incident_velocity},
                                    {"x0", inc.x0},
                                    {"per_band", per}});
  c.log() << "scatter: R = " << g15(rep.R) << ", T = " << g15(rep.T) << "\n";
}

inline void cmd_oracle_dispersion(Context& c) {
  const auto& sc = c.scene();
  const auto stack = LayerStack::from_profile(*sc.medium(sc.side).profile);
  const Interval win = c.window();
  std::string csv = "lambda,type,k_or_decay\n";
  for (int i = 0; i < sc.kpoints; ++i) {
    const double lam = win.lo + (win.hi - win.lo) * i / (sc.kpoints - 1);
    const auto d = dispersion_oracle(stack, lam);
    csv += g15(lam) + (d.band ? ",band," + g15(d.k) : ",gap," + g15(d.decay)) + "\n";
  }
  c.write_text("oracle_dispersion.csv", csv);
  c.log() << "oracle-dispersion: " << sc.kpoints << " samples\n";
}

inline void cmd_oracle_scatter(Context& c) {
  const auto& sc = c.scene();
  if (!sc.lambda) fail(error_kind::invalid_argument, "oracle-scatter needs a frequency (scene key 'lambda' or --lambda)");
  const auto r = oracle_scatter(LayerStack::from_profile(*sc.left.profile), LayerStack::from_profile(*sc.right.profile),
                                *sc.lambda);
  c.write_json("oracle_scatter.json", json{{"lambda", *sc.lambda},
                                           {"r_re", r.r.real()},
                                           {"r_im", r.r.imag()},
                                           {"t_re", r.t.real()},
                                           {"t_im", r.t.imag()},
                                           {"R", r.R},
                                           {"T", r.T},
                                           {"right_gap", r.right_gap},
                                           {"decay", r.decay}});
  c.log() << "oracle-scatter: R = " << g15(r.R) << ", T = " << g15(r.T) << "\n";
}

inline void cmd_validate(Context& c) {
  const auto sys = c.system();
  // log-spaced samples from just past the transition region out to 1e4 times its scale
  const double start = std::max(1.0, sys->transition_halfwidth()) * (1.0 + 1e-9);
  std::vector<double> xs;
  for (int i = 0; i <= 400; ++i) {
    const double x = start * std::pow(10.0, 4.0 * i / 400.0);
    xs.push_back(-x);
    xs.push_back(x);
  }
  const auto rep = validate_asymptotics(*sys, xs);
  c.write_json("validate.json", json{{"C_left", rep.c_left},
                                     {"C_right", rep.c_right},
                                     {"slope_left", number_or_null(rep.slope_left)},
                                     {"slope_right", number_or_null(rep.slope_right)},
                                     {"decay_exponent", number_or_null(sys->decay_exponent())},
                                     {"samples", xs.size()}});
  c.log() << "validate: C_left = " << g15(rep.c_left) << ", C_right = " << g15(rep.c_right) << "\n";
}

// ---------------------------------------------------------------------------

/// Applies flag overrides to the raw scene document before validation.
inline void apply_flags(json& doc, const po::variables_map& vm) {
  auto sub = [&](const char* key) -> json& {
    if (!doc.contains(key) || doc[key].is_null()) doc[key] = json::object();
    return doc[key];
  };
  if (vm.count("N")) sub("bands")["N"] = vm["N"].as<int>();
  if (vm.count("kpoints")) sub("bands")["kpoints"] = vm["kpoints"].as<int>();
  if (vm.count("n-bands")) sub("bands")["n_bands"] = vm["n-bands"].as<int>();
  if (vm.count("side")) {
    sub("bands")["side"] = vm["side"].as<std::string>();
    sub("packet")["side"] = vm["side"].as<std::string>();
  }
  if (vm.count("window")) {
    const auto& w = vm["window"].as<std::vector<double>>();
    if (w.size() != 2) throw usage_error("--window takes exactly two values");
    doc["window"] = json::array({w[0], w[1]});
  }
  if (vm.count("band")) sub("packet")["band"] = vm["band"].as<int>();
  if (vm.count("k0")) sub("packet")["k0"] = vm["k0"].as<double>();
  if (vm.count("sigma-k")) sub("packet")["sigma_k"] = vm["sigma-k"].as<double>();
  if (vm.count("direction")) sub("run")["direction"] = vm["direction"].as<std::string>();
  if (vm.count("snapshot-every")) sub("run")["snapshot_every"] = vm["snapshot-every"].as<long>();
  if (vm.count("lambda")) doc["lambda"] = vm["lambda"].as<double>();
  if (vm.count("threads")) doc["threads"] = vm["threads"].as<int>();
  if (vm.count("seed")) doc["seed"] = vm["seed"].as<long>();
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  po::options_description opts("options");
  opts.add_options()("help,h", "show this help")("config", po::value<std::string>(), "scene file (phc-scene/1)")(
      "out", po::value<std::string>()->default_value("."), "output directory")("N", po::value<int>(), "plane-wave cutoff")(
      "kpoints", po::value<int>(), "k-grid points")("n-bands", po::value<int>(), "tracked bands")(
      "window", po::value<std::vector<double>>()->multitoken(), "spectral window A B")(
      "band", po::value<int>(), "packet band")("k0", po::value<double>(), "packet quasi-momentum")(
      "sigma-k", po::value<double>(), "packet width in k")("direction", po::value<std::string>(), "plus|minus")(
      "side", po::value<std::string>(), "left|right")("threads", po::value<int>(), "worker threads (0: all)")(
      "seed", po::value<long>(), "random seed")("lambda", po::value<double>(), "frequency for oracle-scatter")(
      "snapshot-every", po::value<long>(), "steps between evolve snapshots");
  po::options_description all;
  all.add(opts).add_options()("command", po::value<std::string>(), "");
  po::positional_options_description pos;
  pos.add("command", 1);

  auto usage = [&](std::ostream& os) {
    os << "usage: phc <command> --config scene.json [--out DIR] [options]\ncommands:";
    for (const auto& c : commands()) os << " " << c;
    os << "\n" << opts;
  };

  po::variables_map vm;
  try {
    std::vector<const char*> argv{"phc"};
    for (const auto& a : args) argv.push_back(a.c_str());
    // no short options, so negative numbers parse as values
    const int style = po::command_line_style::unix_style ^ po::command_line_style::allow_short;
    po::store(po::command_line_parser(static_cast<int>(argv.size()), argv.data())
                  .options(all)
                  .positional(pos)
                  .style(style)
                  .run(),
              vm);
    po::notify(vm);
    if (vm.count("help")) {
      usage(out);
      return 0;
    }
    if (!vm.count("command")) throw usage_error("missing command");
    const std::string cmd = vm["command"].as<std::string>();
    if (std::find(commands().begin(), commands().end(), cmd) == commands().end())
      throw usage_error("unknown command '" + cmd + "'");
    if (!vm.count("config")) throw usage_error("--config is required");

    json doc = read_json_file(vm["config"].as<std::string>());
    if (!doc.is_object()) schema_fail("", "scene must be a JSON object");
    apply_flags(doc, vm);
    Context ctx(parse_scene_json(doc), vm["out"].as<std::string>(), out);

    static const std::map<std::string, void (*)(Context&)> table{
        {"bands", cmd_bands},
        {"thresholds", cmd_thresholds},
        {"spectrum", cmd_spectrum},
        {"mourre", cmd_mourre},
        {"flatband", cmd_flatband},
        {"interface-states", cmd_interface_states},
        {"evolve", cmd_evolve},
        {"moller", cmd_moller},
        {"initial-sets", cmd_initial_sets},
        {"scatter", cmd_scatter},
        {"oracle-dispersion", cmd_oracle_dispersion},
        {"oracle-scatter", cmd_oracle_scatter},
        {"validate", cmd_validate}};
    table.at(cmd)(ctx);
    return 0;
  } catch (const po::error& e) {
    err << "usage error: " << e.what() << "\n";
    usage(err);
    return 2;
  } catch (const usage_error& e) {
    err << "usage error: " << e.what() << "\n";
    usage(err);
    return 2;
  } catch (const error& e) {
    err << e.what() << "\n";
    return e.kind() == error_kind::schema_error ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return 1;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace phc::cli
