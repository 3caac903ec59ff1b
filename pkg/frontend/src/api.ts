// Typed client for the review-service JSON API. The fetch function is
// injectable so tests can point the client at any host or stub it out.

export interface JobPayload {
  job_id: string;
  anchor_id: number;
  seed: number;
  state: 'queued' | 'running' | 'done' | 'failed';
  progress: { step: number; total: number };
  mu?: number;
  m?: number;
  tau?: number;
  error?: string;
}

export interface CandidateCard {
  candidate_id: number;
  id: string;
  score: number;
  norm: number;
  is_clone: boolean;
  thumbnail_url: string;
}

export interface CandidatesPayload {
  anchor_id: number;
  tau: number;
  delta: number;
  candidates: CandidateCard[];
  least_similar: CandidateCard;
}

export interface StatsPayload {
  anchor_id: number;
  mu: number;
  m: number;
  tau: number;
  histogram: { edges: number[]; pos_counts: number[]; corpus_counts: number[] };
  calibration: [number, number, number, number][];
}

export interface CorpusItem {
  index: number;
  id: string;
  thumbnail_url: string;
}

export interface CorpusPage {
  total: number;
  page: number;
  page_size: number;
  items: CorpusItem[];
}

export interface DecisionRecord {
  anchor_id: number;
  candidate_id: number;
  action: string;
  score: number;
  tau: number;
  delta: number;
  note: string;
  timestamp: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl = '',
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  corpusPage(page: number, pageSize = 24): Promise<CorpusPage> {
    return this.request(`/corpus?page=${page}&page_size=${pageSize}`);
  }

  startTraining(anchorId: number, seed?: number): Promise<JobPayload> {
    return this.request(`/anchors/${anchorId}/train`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(seed === undefined ? {} : { seed }),
    });
  }

  jobState(jobId: string): Promise<JobPayload> {
    return this.request(`/jobs/${jobId}`);
  }

  candidates(anchorId: number, k: number, delta = 0): Promise<CandidatesPayload> {
    return this.request(`/anchors/${anchorId}/candidates?k=${k}&delta=${delta}`);
  }

  stats(anchorId: number): Promise<StatsPayload> {
    return this.request(`/anchors/${anchorId}/stats`);
  }

  decide(
    anchorId: number,
    candidateId: number,
    action: 'accept' | 'reject' | 'unsure',
    delta: number,
    note = '',
  ): Promise<DecisionRecord> {
    return this.request(`/anchors/${anchorId}/decisions`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ candidate_id: candidateId, action, delta, note }),
    });
  }

  decisions(anchorId: number): Promise<{ anchor_id: number; decisions: DecisionRecord[] }> {
    return this.request(`/anchors/${anchorId}/decisions`);
  }
}

export async function pollJob(
  client: ApiClient,
  jobId: string,
  onProgress?: (job: JobPayload) => void,
  intervalMs = 250,
  timeoutMs = 120_000,
): Promise<JobPayload> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const job = await client.jobState(jobId);
    onProgress?.(job);
    if (job.state === 'done' || job.state === 'failed') return job;
    if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}
