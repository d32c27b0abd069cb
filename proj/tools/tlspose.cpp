// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#include "tlspose/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return tlspose::cli::run(argc, argv, std::cout, std::cerr);
}
