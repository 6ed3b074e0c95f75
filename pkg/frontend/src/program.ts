/**
 * Test-program construction mirroring the Python builder's append API.
 *
 * Each append call records one {op, args} entry; assemble() ships the whole
 * list to `dramlab build` as a builder-script JSON file and reads back the
 * encoded 72-bit program image plus the label/hint tables. Registers cross
 * the boundary as their names ("R5", "CASR", "WDR", ...) and labels as
 * plain strings — the CLI resolves both.
 */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { runCli } from "./cli.js";

/** A register name such as "R0".."R12", "BASR", "RASR", "CASR", or "WDR". */
export type Reg = string;

export interface ScriptOp {
  op: string;
  args: (string | number | boolean)[];
}

export interface AssembledProgram {
  /** Encoded instruction words, 9 bytes each. */
  image: Uint8Array;
  /** Label name -> instruction index. */
  labels: Record<string, number>;
  /** (instruction index, expected transfer count) readback hints. */
  hints: [number, number][];
  instructionCount: number;
}

export class Program {
  private ops: ScriptOp[] = [];

  private push(op: string, ...args: (string | number | boolean)[]): this {
    this.ops.push({ op, args });
    return this;
  }

  // -- DRAM bus commands ---------------------------------------------------

  appendAct(bankReg: Reg, incBank: boolean, rowReg: Reg, incRow: boolean, delay = 0): this {
    return this.push("ACT", bankReg, incBank, rowReg, incRow, delay);
  }

  appendPre(bankReg: Reg, incBank = false, aux = false, delay = 0): this {
    return this.push("PRE", bankReg, incBank, aux, delay);
  }

  appendRead(
    bankReg: Reg,
    incBank: boolean,
    colReg: Reg,
    incCol: boolean,
    autoPrecharge = false,
    aux = false,
    delay = 0,
  ): this {
    return this.push("READ", bankReg, incBank, colReg, incCol, autoPrecharge, aux, delay);
  }

  appendWrite(
    bankReg: Reg,
    incBank: boolean,
    colReg: Reg,
    incCol: boolean,
    autoPrecharge = false,
    aux = false,
    delay = 0,
  ): this {
    return this.push("WRITE", bankReg, incBank, colReg, incCol, autoPrecharge, aux, delay);
  }

  appendPrea(delay = 0): this {
    return this.push("PREA", delay);
  }

  appendRef(delay = 0): this {
    return this.push("REF", delay);
  }

  appendZqs(delay = 0): this {
    return this.push("ZQS", delay);
  }

  appendNops(slots: number): this {
    return this.push("NOPS", slots);
  }

  // -- register and memory ops ----------------------------------------------

  appendLi(rd: Reg, imm: number): this {
    return this.push("LI", rd, imm);
  }

  appendMv(rd: Reg, rs1: Reg): this {
    return this.push("MV", rd, rs1);
  }

  appendSrc(rd: Reg, rs1: Reg): this {
    return this.push("SRC", rd, rs1);
  }

  appendAnd(rd: Reg, rs1: Reg, rs2: Reg): this {
    return this.push("AND", rd, rs1, rs2);
  }

  appendOr(rd: Reg, rs1: Reg, rs2: Reg): this {
    return this.push("OR", rd, rs1, rs2);
  }

  appendXor(rd: Reg, rs1: Reg, rs2: Reg): this {
    return this.push("XOR", rd, rs1, rs2);
  }

  appendAdd(rd: Reg, rs1: Reg, rs2: Reg): this {
    return this.push("ADD", rd, rs1, rs2);
  }

  appendSub(rd: Reg, rs1: Reg, rs2: Reg): this {
    return this.push("SUB", rd, rs1, rs2);
  }

  appendAddi(rd: Reg, rs1: Reg, imm: number): this {
    return this.push("ADDI", rd, rs1, imm);
  }

  appendLd(rd: Reg, addrReg: Reg, imm = 0): this {
    return this.push("LD", rd, addrReg, imm);
  }

  appendSt(srcReg: Reg, addrReg: Reg, imm = 0): this {
    return this.push("ST", srcReg, addrReg, imm);
  }

  // -- control flow ----------------------------------------------------------

  /** Branch if rs1 < rs2: (label, rs1, rs2), or the immediate form (reg, imm, label). */
  appendBl(a: string, b: Reg | number, c: Reg | string): this {
    return this.push("BL", a, b, c);
  }

  /** Branch if rs1 == rs2: (label, rs1, rs2), or the immediate form (reg, imm, label). */
  appendBeq(a: string, b: Reg | number, c: Reg | string): this {
    return this.push("BEQ", a, b, c);
  }

  appendJump(target: string | number): this {
    return this.push("JUMP", target);
  }

  appendSleep(cycles: number): this {
    return this.push("SLEEP", cycles);
  }

  appendLdwd(sliceIdx: number, rs1: Reg): this {
    return this.push("LDWD", sliceIdx, rs1);
  }

  appendLdpc(rd: Reg, counter: number | string): this {
    return this.push("LDPC", rd, counter);
  }

  appendSre(): this {
    return this.push("SRE");
  }

  appendSrx(): this {
    return this.push("SRX");
  }

  appendEnd(): this {
    return this.push("END");
  }

  appendHint(count: number): this {
    return this.push("HINT", count);
  }

  appendLabel(name: string): this {
    return this.push("LABEL", name);
  }

  // -- boundary crossing -------------------------------------------------------

  toScript(): { ops: ScriptOp[] } {
    return { ops: this.ops.map((entry) => ({ op: entry.op, args: [...entry.args] })) };
  }

  /** Assemble via the CLI and return the binary image with its label tables. */
  assemble(): AssembledProgram {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "dramlab-"));
    try {
      const scriptPath = path.join(dir, "script.json");
      const binPath = path.join(dir, "program.bin");
      const labelsPath = path.join(dir, "labels.json");
      fs.writeFileSync(scriptPath, JSON.stringify(this.toScript()));
      runCli(["build", scriptPath, "-o", binPath, "--labels", labelsPath]);
      const image = new Uint8Array(fs.readFileSync(binPath));
      const tables = JSON.parse(fs.readFileSync(labelsPath, "utf-8")) as {
        labels: Record<string, number>;
        hints: [number, number][];
        instructions: number;
      };
      return {
        image,
        labels: tables.labels,
        hints: tables.hints,
        instructionCount: tables.instructions,
      };
    } finally {
      fs.rmSync(dir, { recursive: true, force: true });
    }
  }
}
