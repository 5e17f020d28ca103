/**
 * Console view-model: a pure reducer over connection/frame/input events.
 * Replaying the same event sequence reproduces the same state, which is
 * what the replay test asserts.
 */
import {
  ClientFrame,
  CommandField,
  SKILLS,
  SkillName,
  ServerFrame,
  StateFrame,
  clamp,
} from "./protocol";

export interface EventLogEntry {
  kind: "info" | "warning" | "error";
  text: string;
}

export interface ConsoleState {
  connection: "connecting" | "open" | "closed";
  role: "operator" | "observer" | null;
  activeSkill: SkillName | null;
  allowed: SkillName[];
  sliders: Record<CommandField, number>;
  lastState: StateFrame | null;
  rewardHistory: number[];
  events: EventLogEntry[];
  lastSeq: number | null;
  seqGaps: number;
  pendingTransition: SkillName | null;
}

export const REWARD_HISTORY_LIMIT = 240;
export const EVENT_LOG_LIMIT = 50;

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    role: null,
    activeSkill: null,
    allowed: [],
    sliders: { vx: 0, vy: 0, yaw_rate: 0, h_cmd: 1.15 },
    lastState: null,
    rewardHistory: [],
    events: [],
    lastSeq: null,
    seqGaps: 0,
    pendingTransition: null,
  };
}

export type ConsoleEvent =
  | { kind: "socket-open" }
  | { kind: "socket-close" }
  | { kind: "server-frame"; frame: ServerFrame }
  | { kind: "slider"; field: CommandField; value: number }
  | { kind: "transition-requested"; skill: SkillName }
  | { kind: "transition-sent"; skill: SkillName };

function pushEvent(events: EventLogEntry[], entry: EventLogEntry): EventLogEntry[] {
  return [...events, entry].slice(-EVENT_LOG_LIMIT);
}

export function reduce(state: ConsoleState, event: ConsoleEvent): ConsoleState {
  switch (event.kind) {
    case "socket-open":
      return { ...state, connection: "open", lastSeq: null };
    case "socket-close":
      return {
        ...state,
        connection: "closed",
        events: pushEvent(state.events, { kind: "warning", text: "connection lost" }),
      };
    case "slider": {
      const value = clamp(event.field, event.value);
      return { ...state, sliders: { ...state.sliders, [event.field]: value } };
    }
    case "transition-requested":
      // at most one transition may be pending at a time
      if (state.pendingTransition !== null) return state;
      return { ...state, pendingTransition: event.skill };
    case "transition-sent":
      return state;
    case "server-frame":
      return applyFrame(state, event.frame);
  }
}

function applyFrame(state: ConsoleState, frame: ServerFrame): ConsoleState {
  let lastSeq = state.lastSeq;
  let seqGaps = state.seqGaps;
  if (lastSeq !== null && frame.seq !== lastSeq + 1) {
    seqGaps += 1;
  }
  lastSeq = frame.seq;

  if (frame.type === "state") {
    const skillChanged = state.activeSkill !== frame.skill;
    const pending = state.pendingTransition === frame.skill ? null : state.pendingTransition;
    return {
      ...state,
      lastSeq,
      seqGaps,
      activeSkill: frame.skill,
      allowed: frame.allowed_transitions,
      lastState: frame,
      pendingTransition: pending,
      rewardHistory: [...state.rewardHistory, frame.reward].slice(-REWARD_HISTORY_LIMIT),
      events: skillChanged
        ? pushEvent(state.events, { kind: "info", text: `active skill: ${frame.skill}` })
        : state.events,
    };
  }
  if (frame.type === "hello") {
    return {
      ...state,
      lastSeq,
      seqGaps,
      role: frame.role,
      events: pushEvent(state.events, { kind: "info", text: `connected as ${frame.role}` }),
    };
  }
  // error/warning notices land in the event log; a rejected transition is
  // no longer pending
  return {
    ...state,
    lastSeq,
    seqGaps,
    pendingTransition: frame.type === "error" ? null : state.pendingTransition,
    events: pushEvent(state.events, { kind: frame.type, text: frame.reason }),
  };
}

/** A transition button is enabled only for graph-allowed successors of the
 * active skill (and never while another transition is pending). */
export function transitionEnabled(state: ConsoleState, skill: SkillName): boolean {
  if (state.connection !== "open" || state.role !== "operator") return false;
  if (state.pendingTransition !== null) return false;
  return state.allowed.includes(skill);
}

export function buttonStates(state: ConsoleState): Record<SkillName, boolean> {
  const out = {} as Record<SkillName, boolean>;
  for (const skill of SKILLS) out[skill] = transitionEnabled(state, skill);
  return out;
}

/** Outgoing command frame for the current slider values (already clamped). */
export function commandFrame(state: ConsoleState): ClientFrame {
  const s = state.sliders;
  return { type: "cmd", vx: s.vx, vy: s.vy, yaw_rate: s.yaw_rate, h_cmd: s.h_cmd };
}
