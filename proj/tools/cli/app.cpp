#include "cli/app.hpp"

#include <CLI11.hpp>

#include <functional>
#include <map>
#include <optional>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "swinvrnn/errors.hpp"

namespace swinvrnn::cli {

namespace {

struct CommonOptions {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> preset;
  // Shorthand flags, turned into --set entries after the user's own.
  std::vector<std::string> shorthand;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.configs, "configuration file (repeatable; later files win)");
  cmd->add_option("--set", o.sets, "override, section.key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--preset", o.preset, "toy or paper");
}

template <typename T>
void shorthand(CLI::App* cmd, CommonOptions& o, const std::string& flag, const std::string& key,
               const std::string& help) {
  cmd->add_option_function<T>(
      flag, [&o, key](const T& v) {
        std::ostringstream os;
        os << v;
        o.shorthand.push_back(key + "=" + os.str());
      },
      help);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SwinVRNN data-driven ensemble forecasting", "swinvrnn"};
  app.require_subcommand(1);
  std::map<std::string, CommonOptions> options;
  using Command = std::function<void(const RunConfig&, std::ostream&)>;
  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"prepare-data", "build the consolidated data cache", cmd_prepare_data},
      {"train", "train phase 1 (SwinRNN) or phase 2 (SwinVRNN)", cmd_train},
      {"forecast", "deterministic control forecasts", cmd_forecast},
      {"ensemble", "ensemble forecasts with a perturbation method", cmd_ensemble},
      {"evaluate", "score forecasts against the cached truth", cmd_evaluate},
      {"plot", "SVG figures from evaluation outputs", cmd_plot},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help, fn] : commands) {
    auto* cmd = app.add_subcommand(name, help);
    auto& o = options[name];
    add_common(cmd, o);
    subs[name] = cmd;
  }
  shorthand<int>(subs["train"], options["train"], "--phase", "train.phase", "training phase (1 or 2)");
  shorthand<std::string>(subs["train"], options["train"], "--init", "train.init_checkpoint", "phase-1 checkpoint");
  shorthand<std::string>(subs["forecast"], options["forecast"], "--checkpoint", "forecast.checkpoint", "checkpoint");
  shorthand<std::string>(subs["ensemble"], options["ensemble"], "--method", "ensemble.method",
                         "fixed, mc-dropout, learned, multi-model or control");
  shorthand<std::int64_t>(subs["ensemble"], options["ensemble"], "--members", "ensemble.n_members", "members");
  shorthand<double>(subs["ensemble"], options["ensemble"], "--sigma", "ensemble.sigma", "input-noise scale");
  shorthand<std::string>(subs["ensemble"], options["ensemble"], "--checkpoints", "ensemble.checkpoints",
                         "comma-separated checkpoint directories");
  shorthand<std::string>(subs["evaluate"], options["evaluate"], "--forecast", "evaluate.forecast",
                         "forecast or ensemble run directory");
  shorthand<std::string>(subs["plot"], options["plot"], "--inputs", "plot.inputs",
                         "comma-separated evaluation directories");

  std::vector<std::string> argv{"swinvrnn"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << "\n";
    return 2;
  }

  for (const auto& [name, help, fn] : commands) {
    if (!subs[name]->parsed()) continue;
    const auto& o = options[name];
    try {
      RunConfig::Sources src;
      src.preset = o.preset;
      for (const auto& c : o.configs) src.files.emplace_back(c);
      src.sets = o.sets;
      src.sets.insert(src.sets.end(), o.shorthand.begin(), o.shorthand.end());
      src.seed = o.seed;
      if (o.out) src.out = *o.out;
      const auto cfg = RunConfig::build(src);
      fn(cfg, out);
      return 0;
    } catch (const ConfigError& e) {
      err << "error[" << e.kind() << "]: " << e.what() << "\n";
      return 2;
    } catch (const PreconditionError& e) {
      err << "error[" << e.kind() << "]: " << e.what() << "\n";
      return 3;
    } catch (const Error& e) {
      err << "error[" << e.kind() << "]: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      err << "error[internal]: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace swinvrnn::cli
