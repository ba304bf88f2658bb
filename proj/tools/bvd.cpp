// bvd decompose|centroid|classify|sweep --spec FILE [--out DIR]
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include "bvd/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Bias-variance decompositions for g-Bregman divergences"};
    app.require_subcommand(1, 1);
    std::string spec_file;
    std::string out_dir = ".";
    for (const char* name : {"decompose", "centroid", "classify", "sweep"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--spec", spec_file, "experiment spec (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        const auto spec = bvd::cli::load_spec(spec_file);
        if (command != bvd::cli::to_string(spec.command))
            throw bvd::ValidationError("field 'command': spec says '" + std::string(bvd::cli::to_string(spec.command)) +
                                       "' but '" + command + "' was requested");
        const auto res = bvd::cli::run(spec, out_dir);
        for (const auto& p : res.artifacts) std::cout << p.string() << "\n";
        return 0;
    } catch (const bvd::ValidationError& e) {
        std::cerr << "bvd: validation error: " << e.what() << "\n";
        return 1;
    } catch (const bvd::NumericalError& e) {
        std::cerr << "bvd: numerical failure in " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "bvd: " << e.what() << "\n";
        return 1;
    }
}
