/**
 * TypeScript client for the dramlab testbench. Everything here drives the
 * `dramlab` CLI in a subprocess — programs cross as encoded bytes, reports
 * as plain JSON mappings, readback data as 64-byte transfer blocks.
 */

export { CliError, cliBinary, cliVersion, runCli } from "./cli.js";
export { Program } from "./program.js";
export type { AssembledProgram, Reg, ScriptOp } from "./program.js";
export { Platform, TRANSFER_BYTES } from "./platform.js";
export type { ExecuteOptions, RunReport } from "./platform.js";

import { Program } from "./program.js";
import { Platform, type ExecuteOptions, type RunReport } from "./platform.js";
import type { AssembledProgram } from "./program.js";

/** Must match the Python package version; the test suite checks it against the CLI. */
export const VERSION = "0.1.0";

/** Assemble a program to its binary image and label tables. */
export function assemble(program: Program): AssembledProgram {
  return program.assemble();
}

/** One-shot run of a program on a fresh platform handle. */
export function simulate(
  program: Program | Uint8Array,
  profile: string | Record<string, unknown> = "ddr4_default",
  opts: ExecuteOptions = {},
): { report: RunReport; platform: Platform } {
  const platform = new Platform().initialize(profile);
  const report = platform.execute(program, opts);
  return { report, platform };
}
