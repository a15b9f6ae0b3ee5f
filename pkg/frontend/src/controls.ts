import type { PoseField } from "./state";

export interface NudgeEvent {
  field: PoseField;
  direction: 1 | -1;
}

// Keyboard map: arrows move on the ground plane, PageUp/Down adjust
// height, letter keys grow a dimension (with Shift to shrink), q/e turn.
const KEY_MAP: Record<string, NudgeEvent> = {
  ArrowRight: { field: "x", direction: 1 },
  ArrowLeft: { field: "x", direction: -1 },
  ArrowUp: { field: "y", direction: 1 },
  ArrowDown: { field: "y", direction: -1 },
  PageUp: { field: "z", direction: 1 },
  PageDown: { field: "z", direction: -1 },
  l: { field: "l", direction: 1 },
  L: { field: "l", direction: -1 },
  w: { field: "w", direction: 1 },
  W: { field: "w", direction: -1 },
  h: { field: "h", direction: 1 },
  H: { field: "h", direction: -1 },
  e: { field: "yaw", direction: 1 },
  q: { field: "yaw", direction: -1 },
};

export function nudgeForKey(key: string): NudgeEvent | null {
  return KEY_MAP[key] ?? null;
}

export const UNDO_KEY = "u";
export const SNAP_KEY = "g";
