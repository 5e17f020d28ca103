/**
 * Schematic top-down scene plus the instrument panels. Boxes and markers
 * only; enough for operator decisions without an asset pipeline.
 */
import { ConsoleState, buttonStates } from "./model";
import { COMMAND_LIMITS, SKILLS, StateFrame } from "./protocol";

const SCALE = 140; // px per meter
const VIEW_HALF = 1.6;

function worldToCanvas(canvas: HTMLCanvasElement, x: number, y: number): [number, number] {
  // robot-centric view: +x up, +y left
  return [canvas.width / 2 - y * SCALE, canvas.height / 2 - x * SCALE];
}

function drawRotRect(ctx: CanvasRenderingContext2D, canvas: HTMLCanvasElement,
                     cx: number, cy: number, w: number, h: number, yaw: number,
                     fill: string, stroke?: string): void {
  const [px, py] = worldToCanvas(canvas, cx, cy);
  ctx.save();
  ctx.translate(px, py);
  ctx.rotate(-yaw);
  ctx.fillStyle = fill;
  ctx.fillRect(-h * SCALE / 2, -w * SCALE / 2, h * SCALE, w * SCALE);
  if (stroke) {
    ctx.strokeStyle = stroke;
    ctx.strokeRect(-h * SCALE / 2, -w * SCALE / 2, h * SCALE, w * SCALE);
  }
  ctx.restore();
}

function dot(ctx: CanvasRenderingContext2D, canvas: HTMLCanvasElement,
             x: number, y: number, r: number, color: string): void {
  const [px, py] = worldToCanvas(canvas, x, y);
  ctx.beginPath();
  ctx.arc(px, py, r, 0, 2 * Math.PI);
  ctx.fillStyle = color;
  ctx.fill();
}

export function drawScene(canvas: HTMLCanvasElement, frame: StateFrame | null): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (!frame) {
    ctx.fillStyle = "#8899aa";
    ctx.fillText("waiting for state…", 20, 24);
    return;
  }
  const r = frame.robot;
  // center the view on the robot base
  const ox = r.base_pos[0];
  const oy = r.base_pos[1];
  const rel = (p: number[]) => [p[0] - ox, p[1] - oy] as [number, number];

  // table
  if (frame.table[2] > 0) {
    const [tx, ty] = rel(frame.table);
    drawRotRect(ctx, canvas, tx, ty, 1.0, 0.8, frame.table[3], "#3a2f22", "#6b5a3e");
  }
  // box
  const [bx, by] = rel(frame.box.pos);
  drawRotRect(ctx, canvas, bx, by, frame.box.dims[1], frame.box.dims[0], frame.box.yaw,
              frame.box.on_ground ? "#7a4a2b" : "#b06c2f", "#e0a05a");
  // feet
  const [flx, fly] = rel(r.foot_L);
  const [frx, fry] = rel(r.foot_R);
  dot(ctx, canvas, flx, fly, 7, r.foot_contact[0] ? "#3fa35a" : "#777");
  dot(ctx, canvas, frx, fry, 7, r.foot_contact[1] ? "#3fa35a" : "#777");
  // torso (yaw arrow)
  drawRotRect(ctx, canvas, 0, 0, 0.3, 0.25, r.rpy[2], "#4a6b9a", "#7fa8d9");
  const yaw = r.rpy[2];
  const [ax, ay] = worldToCanvas(canvas, 0.25 * Math.cos(yaw), 0.25 * Math.sin(yaw));
  const [cx0, cy0] = worldToCanvas(canvas, 0, 0);
  ctx.strokeStyle = "#cfe3ff";
  ctx.beginPath();
  ctx.moveTo(cx0, cy0);
  ctx.lineTo(ax, ay);
  ctx.stroke();
  // hands and cop
  const [hlx, hly] = rel(r.hand_L);
  const [hrx, hry] = rel(r.hand_R);
  dot(ctx, canvas, hlx, hly, 5, frame.box.held[0] ? "#ffd75e" : "#d9e3f0");
  dot(ctx, canvas, hrx, hry, 5, frame.box.held[1] ? "#ffd75e" : "#d9e3f0");
  dot(ctx, canvas, r.cop[0] - ox, r.cop[1] - oy, 4, "#ff5e5e");
}

export function drawSparkline(canvas: HTMLCanvasElement, history: number[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (history.length < 2) return;
  const lo = Math.min(...history, 0);
  const hi = Math.max(...history, 1);
  ctx.strokeStyle = "#6fd18a";
  ctx.beginPath();
  history.forEach((v, i) => {
    const x = (i / (history.length - 1)) * canvas.width;
    const y = canvas.height - ((v - lo) / (hi - lo + 1e-9)) * (canvas.height - 4) - 2;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

export function renderPanel(root: Document, state: ConsoleState): void {
  const byId = (id: string) => root.getElementById(id);
  const status = byId("status");
  if (status) {
    status.textContent = `${state.connection}${state.role ? " (" + state.role + ")" : ""}`;
    status.className = state.connection;
  }
  const skill = byId("active-skill");
  if (skill) skill.textContent = state.activeSkill ?? "—";

  const enabled = buttonStates(state);
  for (const name of SKILLS) {
    const button = byId(`btn-${name}`) as HTMLButtonElement | null;
    if (button) button.disabled = !enabled[name];
  }
  const f = state.lastState;
  const pc = byId("phase-contact") as HTMLProgressElement | null;
  const pl = byId("phase-lift") as HTMLProgressElement | null;
  if (pc) pc.value = f?.p_contact ?? 0;
  if (pl) pl.value = f?.p_lift ?? 0;
  const reward = byId("reward-value");
  if (reward) reward.textContent = f ? f.reward.toFixed(3) : "—";
  const term = byId("terminated");
  if (term) term.textContent = f?.terminated ?? "";

  const log = byId("event-log");
  if (log) {
    log.innerHTML = "";
    for (const entry of state.events.slice(-12).reverse()) {
      const li = root.createElement("li");
      li.textContent = entry.text;
      li.className = entry.kind;
      log.appendChild(li);
    }
  }
  for (const field of Object.keys(COMMAND_LIMITS) as (keyof typeof COMMAND_LIMITS)[]) {
    const label = byId(`label-${field}`);
    if (label) label.textContent = `${field}: ${state.sliders[field].toFixed(2)}`;
  }
}
