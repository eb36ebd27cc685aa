// pcwqed: command-line front end
//
//   pcwqed <command> [--config FILE] [--seed N] [--out-dir DIR] [--format csv|svg|both]
//   pcwqed --print-schema
//
// Exit codes: 0 success, 2 input or config error, 3 numeric or convergence error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "pcwqed/app.hpp"

namespace {

void write_text(const std::string& text, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw pcwqed::InputError("cannot write '" + path.string() + "'");
    f << text;
}

int execute(const std::string& command, const std::string& config_path, std::optional<std::int64_t> seed_flag,
            const std::string& out_dir, const std::string& format, const std::string& data) {
    const auto cfg = pcwqed::app::load_config(config_path);
    const auto seed = static_cast<std::uint64_t>(seed_flag ? *seed_flag : cfg.integer("seed"));
    const auto out = pcwqed::app::run(command, cfg, seed, data);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw pcwqed::InputError("cannot create output directory '" + out_dir + "': " + ec.message());
    const fs::path dir(out_dir);
    if (format != "svg")
        for (const auto& [name, table] : out.tables) pcwqed::io::write_csv(table, (dir / (name + ".csv")).string());
    if (format != "csv")
        for (const auto& [name, chart] : out.charts) pcwqed::io::write_svg(chart, (dir / (name + ".svg")).string());
    for (const auto& [name, text] : out.reports) write_text(text, dir / (name + ".txt"));
    std::cout << out.summary;
    if (!out.ok) {
        std::cerr << "error: fit did not converge; see the report\n";
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Photonic crystal waveguide QED: band structure, spectra, decay and fits"};
    cli.fallthrough();
    bool print_schema = false;
    std::string config_path, out_dir = ".", format = "both", data;
    std::optional<std::int64_t> seed;
    cli.add_flag("--print-schema", print_schema, "list every config key with its default and exit");
    cli.add_option("--config", config_path, "config file of dotted key = value lines")->check(CLI::ExistingFile);
    cli.add_option("--seed", seed, "overrides the config seed");
    cli.add_option("--out-dir", out_dir, "directory for CSV, SVG and report files");
    cli.add_option("--format", format, "output files")->check(CLI::IsMember({"csv", "svg", "both"}));

    std::string command;
    for (const auto& name : pcwqed::app::command_names()) {
        auto* sub = cli.add_subcommand(name, "run " + name);
        sub->callback([&command, name] { command = name; });
        if (name == "fit") sub->add_option("--data", data, "spectrum CSV, overrides fit.data_csv");
    }

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = cli.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (print_schema) {
            std::cout << pcwqed::app::make_config().print_schema();
            return 0;
        }
        if (command.empty()) {
            std::cerr << "error: a command is required (" << "bands, fields, rates, spectrum, synth, fit, decay, fig4)\n";
            return 2;
        }
        return execute(command, config_path, seed, out_dir, format, data);
    } catch (const pcwqed::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const pcwqed::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
