#include "cli_app.hpp"

int main(int argc, char** argv) { return ppt::cli::run(argc, argv); }
