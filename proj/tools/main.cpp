#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.h"

int main(int argc, char** argv) {
    CLI::App app{"genreg: generative regression over value-token sequences"};
    app.require_subcommand(1);
    genreg::cli::add_build_vocab(app);
    genreg::cli::add_encode_check(app);
    genreg::cli::add_synth_data(app);
    genreg::cli::add_train(app);
    genreg::cli::add_predict(app);
    genreg::cli::add_evaluate(app);
    genreg::cli::add_ablate(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
