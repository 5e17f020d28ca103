/**
 * Wire protocol shared with the teleop service: frame shapes, client-side
 * validation, and the training-range command bounds used by the sliders.
 */

export const COMMAND_LIMITS = {
  vx: [-0.5, 1.0],
  vy: [-0.3, 0.3],
  yaw_rate: [-Math.PI / 8, Math.PI / 8],
  h_cmd: [1.0, 1.3],
} as const;

export type CommandField = keyof typeof COMMAND_LIMITS;

export const SKILLS = ["Walk", "Stand", "PickUp", "WalkWithBox", "StandWithBox"] as const;
export type SkillName = (typeof SKILLS)[number];

export interface RobotSummary {
  base_pos: number[];
  rpy: number[];
  hand_L: number[];
  hand_R: number[];
  foot_L: number[];
  foot_R: number[];
  cop: number[];
  foot_contact: boolean[];
}

export interface BoxSummary {
  pos: number[];
  yaw: number;
  dims: number[];
  mass: number;
  held: boolean[];
  on_ground: boolean;
}

export interface StateFrame {
  type: "state";
  seq: number;
  time: number;
  skill: SkillName;
  paused: boolean;
  frozen: boolean;
  robot: RobotSummary;
  box: BoxSummary;
  table: number[];
  p_contact: number;
  p_lift: number;
  reward: number;
  terminated: string | null;
  allowed_transitions: SkillName[];
  cmd: Record<string, number>;
}

export interface HelloFrame {
  type: "hello";
  seq: number;
  role: "operator" | "observer";
  skills: SkillName[];
  limits: Record<string, number[]>;
}

export interface NoticeFrame {
  type: "error" | "warning";
  seq: number;
  reason: string;
}

export type ServerFrame = StateFrame | HelloFrame | NoticeFrame;

export type ClientFrame =
  | { type: "transition"; skill: SkillName; target?: number[]; h_cmd?: number }
  | { type: "cmd"; vx?: number; vy?: number; yaw_rate?: number; h_cmd?: number }
  | { type: "pause" }
  | { type: "reset"; scenario_seed: number };

export function clamp(field: CommandField, value: number): number {
  const [lo, hi] = COMMAND_LIMITS[field];
  return Math.min(Math.max(value, lo), hi);
}

/** Validate a client frame before it goes on the wire; returns an error
 * string, or null when the frame conforms to the schema. */
export function validateClientFrame(frame: unknown): string | null {
  if (typeof frame !== "object" || frame === null) return "frame must be an object";
  const f = frame as Record<string, unknown>;
  switch (f.type) {
    case "transition": {
      if (!SKILLS.includes(f.skill as SkillName)) return `unknown skill ${String(f.skill)}`;
      if (f.target !== undefined) {
        if (!Array.isArray(f.target) || f.target.length !== 3 ||
            !f.target.every((v) => typeof v === "number" && Number.isFinite(v))) {
          return "target must be a finite [x, y, z]";
        }
      }
      return null;
    }
    case "cmd": {
      for (const key of Object.keys(COMMAND_LIMITS) as CommandField[]) {
        const v = f[key];
        if (v !== undefined && (typeof v !== "number" || !Number.isFinite(v))) {
          return `${key} must be a finite number`;
        }
      }
      return null;
    }
    case "pause":
      return null;
    case "reset":
      return Number.isInteger(f.scenario_seed) ? null : "scenario_seed must be an integer";
    default:
      return `unknown frame type ${String(f.type)}`;
  }
}

export function parseServerFrame(raw: string): ServerFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const f = data as Record<string, unknown>;
  if (typeof f.seq !== "number") return null;
  if (f.type === "state" || f.type === "hello" || f.type === "error" || f.type === "warning") {
    return data as ServerFrame;
  }
  return null;
}
