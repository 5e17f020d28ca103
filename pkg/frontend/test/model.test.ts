import { describe, expect, it } from "vitest";

import {
  ConsoleEvent,
  buttonStates,
  initialState,
  reduce,
  transitionEnabled,
} from "../src/model";
import { ServerFrame, StateFrame } from "../src/protocol";

function stateFrame(seq: number, overrides: Partial<StateFrame> = {}): ServerFrame {
  return {
    type: "state",
    seq,
    time: seq * 0.1,
    skill: "Stand",
    paused: false,
    frozen: false,
    robot: {
      base_pos: [0, 0, 0.9], rpy: [0, 0, 0], hand_L: [0.15, 0.3, 0.8],
      hand_R: [0.15, -0.3, 0.8], foot_L: [0, 0.19, 0], foot_R: [0, -0.19, 0],
      cop: [0, 0], foot_contact: [true, true],
    },
    box: { pos: [0.45, 0, 0.95], yaw: 0, dims: [0.3, 0.3, 0.3], mass: 2,
           held: [false, false], on_ground: false },
    table: [0.45, 0, 0.8, 0],
    p_contact: 0,
    p_lift: 0,
    reward: 0.9,
    terminated: null,
    allowed_transitions: ["PickUp", "Walk"],
    cmd: { vx: 0, vy: 0, yaw_rate: 0, h_cmd: 1.15 },
    ...overrides,
  } as ServerFrame;
}

function connected() {
  let s = initialState();
  s = reduce(s, { kind: "socket-open" });
  s = reduce(s, { kind: "server-frame",
                  frame: { type: "hello", seq: 0, role: "operator", skills: [], limits: {} } });
  return s;
}

describe("reducer", () => {
  it("tracks the active skill and allowed transitions from state frames", () => {
    let s = connected();
    s = reduce(s, { kind: "server-frame", frame: stateFrame(1) });
    expect(s.activeSkill).toBe("Stand");
    expect(s.allowed).toEqual(["PickUp", "Walk"]);
    const buttons = buttonStates(s);
    expect(buttons.PickUp).toBe(true);
    expect(buttons.Walk).toBe(true);
    expect(buttons.WalkWithBox).toBe(false);
    expect(buttons.StandWithBox).toBe(false);
  });

  it("disabled set follows every active-skill change", () => {
    let s = connected();
    s = reduce(s, { kind: "server-frame", frame: stateFrame(1) });
    s = reduce(s, { kind: "server-frame",
                    frame: stateFrame(2, { skill: "Walk", allowed_transitions: ["Stand"] }) });
    expect(s.activeSkill).toBe("Walk");
    const buttons = buttonStates(s);
    expect(buttons.Stand).toBe(true);
    expect(buttons.PickUp).toBe(false);
    expect(buttons.WalkWithBox).toBe(false);
  });

  it("sliders clamp to the training ranges", () => {
    let s = connected();
    s = reduce(s, { kind: "slider", field: "vx", value: 5 });
    expect(s.sliders.vx).toBe(1.0);
    s = reduce(s, { kind: "slider", field: "h_cmd", value: 0 });
    expect(s.sliders.h_cmd).toBe(1.0);
  });

  it("queues at most one pending transition", () => {
    let s = connected();
    s = reduce(s, { kind: "server-frame", frame: stateFrame(1) });
    s = reduce(s, { kind: "transition-requested", skill: "PickUp" });
    expect(s.pendingTransition).toBe("PickUp");
    const again = reduce(s, { kind: "transition-requested", skill: "Walk" });
    expect(again.pendingTransition).toBe("PickUp");
    expect(transitionEnabled(s, "Walk")).toBe(false); // locked while pending
  });

  it("clears the pending transition when the skill changes or errors", () => {
    let s = connected();
    s = reduce(s, { kind: "server-frame", frame: stateFrame(1) });
    s = reduce(s, { kind: "transition-requested", skill: "PickUp" });
    const accepted = reduce(s, { kind: "server-frame",
                                 frame: stateFrame(2, { skill: "PickUp",
                                                        allowed_transitions: ["StandWithBox", "Stand"] }) });
    expect(accepted.pendingTransition).toBeNull();
    const rejected = reduce(s, { kind: "server-frame",
                                 frame: { type: "error", seq: 2, reason: "not allowed" } });
    expect(rejected.pendingTransition).toBeNull();
    expect(rejected.events.at(-1)?.kind).toBe("error");
  });

  it("detects sequence gaps", () => {
    let s = connected();
    s = reduce(s, { kind: "server-frame", frame: stateFrame(1) });
    s = reduce(s, { kind: "server-frame", frame: stateFrame(2) });
    expect(s.seqGaps).toBe(0);
    s = reduce(s, { kind: "server-frame", frame: stateFrame(9) });
    expect(s.seqGaps).toBe(1);
  });

  it("observer role never enables transition buttons", () => {
    let s = initialState();
    s = reduce(s, { kind: "socket-open" });
    s = reduce(s, { kind: "server-frame",
                    frame: { type: "hello", seq: 0, role: "observer", skills: [], limits: {} } });
    s = reduce(s, { kind: "server-frame", frame: stateFrame(1) });
    expect(Object.values(buttonStates(s)).every((enabled) => !enabled)).toBe(true);
  });

  it("replaying the same frame history reproduces the same state", () => {
    const events: ConsoleEvent[] = [
      { kind: "socket-open" },
      { kind: "server-frame",
        frame: { type: "hello", seq: 0, role: "operator", skills: [], limits: {} } },
      { kind: "server-frame", frame: stateFrame(1) },
      { kind: "slider", field: "vx", value: 0.7 },
      { kind: "transition-requested", skill: "Walk" },
      { kind: "server-frame",
        frame: stateFrame(2, { skill: "Walk", allowed_transitions: ["Stand"] }) },
      { kind: "server-frame", frame: { type: "warning", seq: 3, reason: "clamped" } },
    ];
    const a = events.reduce(reduce, initialState());
    const b = events.reduce(reduce, initialState());
    expect(a).toEqual(b);
    expect(a.rewardHistory.length).toBe(2);
    expect(a.activeSkill).toBe("Walk");
  });

  it("connection loss is visible and disables everything", () => {
    let s = connected();
    s = reduce(s, { kind: "server-frame", frame: stateFrame(1) });
    s = reduce(s, { kind: "socket-close" });
    expect(s.connection).toBe("closed");
    expect(Object.values(buttonStates(s)).every((enabled) => !enabled)).toBe(true);
    expect(s.events.at(-1)?.text).toMatch(/connection lost/);
  });
});
