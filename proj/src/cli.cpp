#include "mona/cli.hpp"

#include "mona/csv.hpp"
#include "mona/error.hpp"
#include "mona/mesh_io.hpp"
#include "mona/scenario.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace mona {

namespace {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("MONA_LOG");
  if (!env) return LogLevel::Error;
  const std::string v(env);
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  return LogLevel::Error;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << text;
  if (!f) throw InputError("I/O error while writing " + path);
}

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

struct Options {
  std::string netlist;
  std::string mesh;
  std::string probes;
  std::string probe;
  std::string out = ".";
  double tau = 0.0;
  double t0 = 0.0;
  double t_end = 0.0;
  double newton_tol = 1e-12;
  int halvings = 3;
  int reference_levels = 3;
  double mesh_size = 0.0;
};

struct Loaded {
  Circuit circuit;
  FieldSource fields;
};

Loaded load(const Options& o, bool demo) {
  Loaded l;
  if (demo) {
    l.circuit = load_circuit(rectifier_netlist());
    l.fields.builtin = rectifier_transformer();
    if (o.mesh_size > 0.0) l.fields.builtin.mesh_size = o.mesh_size;
  } else {
    if (o.netlist.empty()) throw InputError("--netlist is required");
    try {
      l.circuit = load_circuit(read_text(o.netlist));
    } catch (const ParseError& e) {
      throw InputError(o.netlist + ": " + e.what());
    }
    l.fields.base_dir = std::filesystem::path(o.netlist).parent_path().string();
    if (l.fields.base_dir.empty()) l.fields.base_dir = ".";
  }
  if (!o.mesh.empty()) l.fields.mesh_override = o.mesh;
  return l;
}

void require_topology(const CircuitGraph& graph) {
  const auto report = validate_topology(graph);
  if (report.ok) return;
  std::string msg = "topology check failed";
  for (const auto& p : report.problems) msg += "\n  " + p;
  throw InputError(msg);
}

void summarize(std::ostream& out, const TransientResult& r) {
  int iters = 0;
  for (const auto& rec : r.records) iters = std::max(iters, rec.newton.iterations);
  const double peak = r.peak_supplied_power();
  out << "steps: " << r.records.size() << "  tau: " << r.grid.tau << "\n"
      << "max |eps_H|: " << r.max_abs_balance() << " W";
  if (peak > 0.0) out << "  (relative to peak supplied power: " << r.max_abs_balance() / peak << ")";
  out << "\nmax Newton iterations per step: " << iters << "\n";
}

int transient(const Options& o, bool demo, std::ostream& out, std::ostream& err) {
  const Loaded l = load(o, demo);
  require_topology(l.circuit.graph);
  const CoupledSystem sys = build_system(l.circuit, l.fields);
  const auto probes = parse_probes(demo && o.probes.empty() ? kRectifierProbes : o.probes, l.circuit);
  const TimeGrid grid = TimeGrid::make(o.t0, o.t_end, o.tau);
  NewtonConfig cfg;
  cfg.tol = o.newton_tol;

  std::filesystem::create_directories(o.out);
  if (demo) {
    write_text(join(o.out, "rectifier.cir"), rectifier_netlist());
    const auto geo = generate_transformer_mesh(l.fields.builtin);
    write_text(join(o.out, "transformer.mesh"), serialize_mesh(geo.mesh, geo.materials, geo.windings));
  }
  if (log_level() >= LogLevel::Info)
    err << "system size " << sys.size() << " (" << sys.field().dofs() << " field dofs, "
        << sys.field().mesh.triangle_count() << " triangles), " << grid.steps() << " steps\n";

  try {
    const TransientResult r = run_transient(sys, grid, probes, cfg);
    write_csv(trace_table(r), join(o.out, "trace.csv"));
    write_csv(audit_table(r), join(o.out, "audit.csv"));
    summarize(out, r);
  } catch (const TransientFailure& f) {
    write_csv(trace_table(f.partial()), join(o.out, "trace.csv"));
    write_csv(audit_table(f.partial()), join(o.out, "audit.csv"));
    throw;
  }
  return 0;
}

int converge(const Options& o, std::ostream& out, std::ostream& err) {
  const bool demo = o.netlist.empty();
  const Loaded l = load(o, demo);
  require_topology(l.circuit.graph);
  const CoupledSystem sys = build_system(l.circuit, l.fields);
  std::string spec = o.probe;
  if (spec.empty()) {
    if (!demo) throw InputError("--probe is required with --netlist");
    spec = "psi4=psi(4)";
  }
  const Probe probe = make_probe(spec, l.circuit);
  const TimeGrid base = TimeGrid::make(o.t0, o.t_end, o.tau);
  NewtonConfig cfg;
  cfg.tol = o.newton_tol;
  ConvergenceOptions opts;
  opts.halvings = o.halvings;
  opts.reference_levels = o.reference_levels;
  if (log_level() >= LogLevel::Info)
    err << "convergence study of " << probe.name << " with " << o.halvings + 1 << " step sizes\n";

  const auto rows = convergence_study(sys, base, probe, cfg, opts);
  std::filesystem::create_directories(o.out);
  write_csv(eoc_table(rows), join(o.out, "eoc.csv"));
  out << "tau, eps_tau, eoc, max_eps_H\n";
  for (const auto& r : rows)
    out << format_number(r.tau) << ", " << format_number(r.eps_tau) << ", "
        << (std::isnan(r.eoc) ? std::string("--") : format_number(r.eoc)) << ", " << format_number(r.max_eps_H)
        << "\n";
  return 0;
}

int check(const Options& o, std::ostream& out) {
  const Loaded l = load(o, false);
  const auto report = validate_topology(l.circuit.graph);
  if (!report.ok) {
    std::string msg = "topology check failed";
    for (const auto& p : report.problems) msg += "\n  " + p;
    throw InputError(msg);
  }
  const CoupledSystem sys = build_system(l.circuit, l.fields);
  out << "ok: " << l.circuit.netlist.elements.size() << " elements, " << l.circuit.graph.n_nodes << " nodes, "
      << sys.size() << " unknowns (" << sys.field().dofs() << " field dofs)\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Field-circuit transient simulation in magnetic-oriented nodal analysis", "mona"};
  app.require_subcommand(1);
  Options run_opts, conv_opts, demo_opts, check_opts;

  auto* run = app.add_subcommand("run", "Transient run of a netlist; writes trace.csv and audit.csv");
  run->add_option("--netlist", run_opts.netlist, "Netlist file")->required();
  run->add_option("--mesh", run_opts.mesh, "Mesh file replacing every FIELD reference");
  run->add_option("--tau", run_opts.tau, "Time step [s]")->required();
  run->add_option("--t-end", run_opts.t_end, "End time [s]")->required();
  run->add_option("--t0", run_opts.t0, "Start time [s]");
  run->add_option("--probes", run_opts.probes, "Comma-separated probes, e.g. v_R=v(4),psi4=psi(4)");
  run->add_option("--out", run_opts.out, "Output directory");
  run->add_option("--newton-tol", run_opts.newton_tol, "Newton tolerance");

  auto* conv = app.add_subcommand("converge", "Step-halving convergence study; writes eoc.csv");
  conv->add_option("--netlist", conv_opts.netlist, "Netlist file (default: built-in rectifier)");
  conv->add_option("--mesh", conv_opts.mesh, "Mesh file replacing every FIELD reference");
  conv->add_option("--probe", conv_opts.probe, "State probe for the error, e.g. psi4=psi(4)");
  conv->add_option("--tau", conv_opts.tau, "Coarsest time step [s]")->default_val(0.005);
  conv->add_option("--t-end", conv_opts.t_end, "End time [s]")->default_val(0.05);
  conv->add_option("--t0", conv_opts.t0, "Start time [s]");
  conv->add_option("--halvings", conv_opts.halvings, "Number of step halvings")->default_val(3);
  conv->add_option("--reference-levels", conv_opts.reference_levels, "Extra halvings for the reference run")
      ->default_val(3);
  conv->add_option("--out", conv_opts.out, "Output directory");
  conv->add_option("--newton-tol", conv_opts.newton_tol, "Newton tolerance");

  auto* demo = app.add_subcommand("demo-rectifier", "Built-in full-wave rectifier transient");
  demo->add_option("--tau", demo_opts.tau, "Time step [s]")->default_val(0.000625);
  demo->add_option("--t-end", demo_opts.t_end, "End time [s]")->default_val(0.05);
  demo->add_option("--probes", demo_opts.probes, "Probes (default: v_src, v_R, psi4, i_V)");
  demo->add_option("--mesh-size", demo_opts.mesh_size, "Transformer mesh size [m]");
  demo->add_option("--out", demo_opts.out, "Output directory");
  demo->add_option("--newton-tol", demo_opts.newton_tol, "Newton tolerance");

  auto* chk = app.add_subcommand("check", "Parse and validate a netlist (and its field model)");
  chk->add_option("--netlist", check_opts.netlist, "Netlist file")->required();
  chk->add_option("--mesh", check_opts.mesh, "Mesh file replacing every FIELD reference");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (run->parsed()) return transient(run_opts, false, out, err);
    if (demo->parsed()) return transient(demo_opts, true, out, err);
    if (conv->parsed()) return converge(conv_opts, out, err);
    if (chk->parsed()) return check(check_opts, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mona
