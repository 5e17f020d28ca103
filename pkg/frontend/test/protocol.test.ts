import { describe, expect, it } from "vitest";

import { clamp, parseServerFrame, validateClientFrame } from "../src/protocol";

describe("command clamping", () => {
  it("clamps to the training ranges", () => {
    expect(clamp("vx", 2.0)).toBe(1.0);
    expect(clamp("vx", -2.0)).toBe(-0.5);
    expect(clamp("vy", 0.1)).toBe(0.1);
    expect(clamp("h_cmd", 0.2)).toBe(1.0);
    expect(clamp("h_cmd", 9)).toBe(1.3);
  });
});

describe("client frame validation", () => {
  it("accepts well-formed frames", () => {
    expect(validateClientFrame({ type: "pause" })).toBeNull();
    expect(validateClientFrame({ type: "cmd", vx: 0.5 })).toBeNull();
    expect(validateClientFrame({ type: "transition", skill: "Stand" })).toBeNull();
    expect(validateClientFrame({ type: "transition", skill: "PickUp",
                                 target: [0.4, 0, 1.0] })).toBeNull();
    expect(validateClientFrame({ type: "reset", scenario_seed: 7 })).toBeNull();
  });

  it("rejects schema violations before they reach the wire", () => {
    expect(validateClientFrame({ type: "transition", skill: "Fly" })).toMatch(/unknown skill/);
    expect(validateClientFrame({ type: "cmd", vx: "fast" })).toMatch(/vx/);
    expect(validateClientFrame({ type: "cmd", vy: NaN })).toMatch(/vy/);
    expect(validateClientFrame({ type: "transition", skill: "PickUp", target: [1, 2] }))
      .toMatch(/target/);
    expect(validateClientFrame({ type: "reset", scenario_seed: 1.5 })).toMatch(/seed/);
    expect(validateClientFrame({ type: "selfdestruct" })).toMatch(/unknown frame/);
    expect(validateClientFrame(null)).toMatch(/object/);
  });
});

describe("server frame parsing", () => {
  it("parses known frames and drops garbage", () => {
    expect(parseServerFrame(JSON.stringify({ type: "hello", seq: 0, role: "operator" })))
      .toMatchObject({ type: "hello" });
    expect(parseServerFrame("not json")).toBeNull();
    expect(parseServerFrame(JSON.stringify({ type: "state" }))).toBeNull(); // no seq
    expect(parseServerFrame(JSON.stringify({ type: "mystery", seq: 1 }))).toBeNull();
  });
});
